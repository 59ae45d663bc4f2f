/**
 * CLI entry point.
 *
 *   node dist/main.js --lookup-file transcript.json [--port 8008]
 *                     [--max-new-tokens 64] [--delay-ready 0]
 *
 * Echo mode serves a frozen lookup transcript ("none" on a miss) behind the
 * wire protocol; a real model plugs in by implementing the Generator
 * interface. Greedy, deterministic decoding is part of the contract either
 * way. --delay-ready artificially postpones readiness so clients can
 * exercise the 503 path.
 */

import { Generator, LookupGenerator, SlowLoadingGenerator } from "./generator";
import { AnswerServer } from "./server";

interface Args {
  port: number;
  lookupFile: string;
  maxNewTokens: number;
  delayReady: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { port: 8008, lookupFile: "", maxNewTokens: 64, delayReady: 0 };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = argv[i + 1];
    switch (flag) {
      case "--port":
        args.port = parseInt(value, 10);
        i++;
        break;
      case "--lookup-file":
        args.lookupFile = value;
        i++;
        break;
      case "--max-new-tokens":
        args.maxNewTokens = parseInt(value, 10);
        i++;
        break;
      case "--delay-ready":
        args.delayReady = parseInt(value, 10);
        i++;
        break;
      case "--help":
        console.log(
          "usage: main.js --lookup-file FILE [--port N] [--max-new-tokens N] [--delay-ready MS]"
        );
        process.exit(0);
        break;
      default:
        console.error(`unknown flag: ${flag}`);
        process.exit(2);
    }
  }
  if (!args.lookupFile) {
    console.error("--lookup-file is required (echo mode is the only built-in generator)");
    process.exit(2);
  }
  if (!Number.isInteger(args.maxNewTokens) || args.maxNewTokens < 1) {
    console.error("--max-new-tokens must be a positive integer");
    process.exit(2);
  }
  return args;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  let generator: Generator = new LookupGenerator(args.lookupFile, args.maxNewTokens);
  if (args.delayReady > 0) {
    generator = new SlowLoadingGenerator(generator, args.delayReady);
  }
  const server = new AnswerServer(generator);
  const port = await server.listen(args.port);
  console.log(`answer server listening on http://127.0.0.1:${port}`);
}

main().catch((error) => {
  console.error(error instanceof Error ? error.message : error);
  process.exit(1);
});
