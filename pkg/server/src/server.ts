/**
 * HTTP serving adapter for the answer wire protocol.
 *
 *   POST /v1/answer  {"requests":[{"id","input_text"}]}
 *                 -> {"responses":[{"id","output_text"}]}       200
 *   GET  /v1/health -> {"status":"ok"}                          200
 *
 * 400 on malformed JSON or a body that does not match the schema; 503 while
 * the generator is still loading. Responses preserve request order. All
 * generation is funneled through one serialized queue: throughput comes from
 * batching inside one HTTP call, never from concurrent model access.
 */

import http from "node:http";

import { Generator } from "./generator";

interface AnswerRequestBody {
  requests: { id: string; input_text: string }[];
}

function parseBody(raw: string): AnswerRequestBody {
  let payload: unknown;
  try {
    payload = JSON.parse(raw);
  } catch {
    throw new BadRequest("body is not valid JSON");
  }
  if (payload === null || typeof payload !== "object" || Array.isArray(payload)) {
    throw new BadRequest("body must be a JSON object");
  }
  const requests = (payload as Record<string, unknown>)["requests"];
  if (!Array.isArray(requests) || requests.length === 0) {
    throw new BadRequest("body must carry a nonempty 'requests' array");
  }
  for (const entry of requests) {
    if (entry === null || typeof entry !== "object" || Array.isArray(entry)) {
      throw new BadRequest("each request must be an object");
    }
    const record = entry as Record<string, unknown>;
    if (typeof record["id"] !== "string" || typeof record["input_text"] !== "string") {
      throw new BadRequest("each request needs string 'id' and 'input_text'");
    }
  }
  return payload as AnswerRequestBody;
}

class BadRequest extends Error {}

function sendJson(res: http.ServerResponse, status: number, payload: unknown): void {
  const body = JSON.stringify(payload);
  res.writeHead(status, {
    "content-type": "application/json; charset=utf-8",
    "content-length": Buffer.byteLength(body),
  });
  res.end(body);
}

export class AnswerServer {
  private generator: Generator;
  private loading = true;
  private queue: Promise<unknown> = Promise.resolve();
  readonly server: http.Server;

  constructor(generator: Generator) {
    this.generator = generator;
    this.server = http.createServer((req, res) => this.route(req, res));
    void this.generator.ready().then(() => {
      this.loading = false;
    });
  }

  listen(port: number, host = "127.0.0.1"): Promise<number> {
    return new Promise((resolve, reject) => {
      this.server.once("error", reject);
      this.server.listen(port, host, () => {
        const address = this.server.address();
        resolve(typeof address === "object" && address ? address.port : port);
      });
    });
  }

  close(): Promise<void> {
    return new Promise((resolve) => this.server.close(() => resolve()));
  }

  /** Chain work onto the single inference queue. */
  private enqueue<T>(work: () => Promise<T>): Promise<T> {
    const next = this.queue.then(work, work);
    this.queue = next.catch(() => undefined);
    return next;
  }

  private route(req: http.IncomingMessage, res: http.ServerResponse): void {
    if (req.method === "GET" && req.url === "/v1/health") {
      if (this.loading) {
        sendJson(res, 503, { status: "loading" });
      } else {
        sendJson(res, 200, { status: "ok" });
      }
      return;
    }
    if (req.method === "POST" && req.url === "/v1/answer") {
      if (this.loading) {
        sendJson(res, 503, { error: "model is loading" });
        return;
      }
      let raw = "";
      req.setEncoding("utf-8");
      req.on("data", (chunk: string) => {
        raw += chunk;
      });
      req.on("end", () => {
        void this.handleAnswer(raw, res);
      });
      return;
    }
    sendJson(res, 404, { error: `no route for ${req.method} ${req.url}` });
  }

  private async handleAnswer(raw: string, res: http.ServerResponse): Promise<void> {
    let body: AnswerRequestBody;
    try {
      body = parseBody(raw);
    } catch (error) {
      sendJson(res, 400, { error: error instanceof Error ? error.message : "bad request" });
      return;
    }
    const responses = await this.enqueue(async () => {
      const out = [];
      for (const request of body.requests) {
        out.push({ id: request.id, output_text: await this.generator.generate(request.input_text) });
      }
      return out;
    });
    sendJson(res, 200, { responses });
  }
}
