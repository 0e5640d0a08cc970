/**
 * Entry point.
 *
 *   node dist/src/main.js --model world.json --mode conditional
 *   node dist/src/main.js --model lm.json --mode marginal --transport tcp --port 0
 *
 * stdio is the default transport; with tcp the chosen port is announced on
 * stderr as "listening <port>".
 */

import { loadModel } from './models.js';
import { BridgeSession, Mode } from './session.js';
import { serveStdio, serveTcp } from './server.js';

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key.startsWith('--') || value === undefined) {
      throw new Error(`malformed arguments near ${key}`);
    }
    out.set(key.slice(2), value);
  }
  return out;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  const modelPath = args.get('model');
  if (!modelPath) throw new Error('--model <file> is required');
  const mode = (args.get('mode') ?? 'conditional') as Mode;
  if (mode !== 'conditional' && mode !== 'marginal') {
    throw new Error(`unknown mode ${mode}`);
  }
  const model = loadModel(modelPath);
  const transport = args.get('transport') ?? 'stdio';
  if (transport === 'stdio') {
    await serveStdio(new BridgeSession(model, mode));
  } else if (transport === 'tcp') {
    const port = Number(args.get('port') ?? '0');
    serveTcp(
      () => new BridgeSession(model, mode),
      port,
      (p) => process.stderr.write(`listening ${p}\n`),
    );
  } else {
    throw new Error(`unknown transport ${transport}`);
  }
}

main().catch((e) => {
  process.stderr.write(`fatal: ${e instanceof Error ? e.message : String(e)}\n`);
  process.exit(1);
});
