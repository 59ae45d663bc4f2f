/**
 * Text-to-text generator contract.
 *
 * A generator is a pure input_text -> output_text function with greedy
 * (deterministic) decoding: the same input must always produce the same
 * output. The server never re-serializes or normalizes input_text; all
 * formatting authority stays with the client.
 */

import { readFileSync } from "node:fs";

export interface Generator {
  /** Resolves once the generator can serve requests. */
  ready(): Promise<void>;
  /** Deterministic text-to-text step. */
  generate(inputText: string): Promise<string>;
}

export const NONE_OUTPUT = "none";

/** Cap an output at `maxNewTokens` whitespace-separated tokens. */
export function capTokens(text: string, maxNewTokens: number): string {
  const tokens = text.split(/\s+/).filter((t) => t.length > 0);
  if (tokens.length <= maxNewTokens) {
    return text;
  }
  return tokens.slice(0, maxNewTokens).join(" ");
}

/**
 * Echo-mode generator: answers from a frozen lookup table, "none" on a
 * miss. Used for CI and cross-component conformance runs, where the table
 * is a transcript generated once by the client-side oracle.
 */
export class LookupGenerator implements Generator {
  private table: Map<string, string>;
  private maxNewTokens: number;

  constructor(lookupFile: string, maxNewTokens = 64) {
    const payload = JSON.parse(readFileSync(lookupFile, "utf-8"));
    if (payload === null || typeof payload !== "object" || Array.isArray(payload)) {
      throw new Error(`${lookupFile}: lookup file must be a JSON object`);
    }
    this.table = new Map(Object.entries(payload as Record<string, string>));
    this.maxNewTokens = maxNewTokens;
  }

  get size(): number {
    return this.table.size;
  }

  async ready(): Promise<void> {}

  async generate(inputText: string): Promise<string> {
    return capTokens(this.table.get(inputText) ?? NONE_OUTPUT, this.maxNewTokens);
  }
}

/** Test hook: wraps a generator and delays readiness. */
export class SlowLoadingGenerator implements Generator {
  private inner: Generator;
  private readyAt: number;

  constructor(inner: Generator, delayMs: number) {
    this.inner = inner;
    this.readyAt = Date.now() + delayMs;
  }

  async ready(): Promise<void> {
    const remaining = this.readyAt - Date.now();
    if (remaining > 0) {
      await new Promise((resolve) => setTimeout(resolve, remaining));
    }
    await this.inner.ready();
  }

  generate(inputText: string): Promise<string> {
    return this.inner.generate(inputText);
  }
}
