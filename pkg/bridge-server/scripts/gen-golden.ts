/**
 * Regenerate fixtures/golden-transcript.jsonl from the toy world.
 *
 * The transcript freezes exact request and reply lines; conformance checks
 * replay the requests and compare reply bytes. Request lines use the
 * engine's compact JSON encoding (no spaces, key order type/id/source/prefix).
 */

import { writeFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { loadModel } from '../src/models.js';
import { BridgeSession } from '../src/session.js';

const here = dirname(fileURLToPath(import.meta.url));
const fixtures = join(here, '..', '..', 'fixtures');

const model = loadModel(join(fixtures, 'toy-world.json'));
const session = new BridgeSession(model, 'conditional');

const sources = [
  [0, 2, 3],
  [0, 4],
];
const prefixes = [
  [0],
  [0, 2],
  [0, 3],
  [0, 4],
  [0, 2, 3],
  [0, 3, 2],
  [0, 4, 4],
  [0, 2, 2, 2],
  [0, 3, 4, 2],
  [0, 4, 3, 3],
  [0, 2, 3, 4, 2],
  [0, 4, 4, 4, 4],
];

const lines: string[] = [];
let id = 1;
for (const source of sources) {
  for (const prefix of prefixes) {
    const requestLine = JSON.stringify({ type: 'next', id, source, prefix });
    const replyLine = session.handleLine(requestLine);
    if (replyLine === null) throw new Error('unexpected bye');
    lines.push(JSON.stringify({ request_line: requestLine, reply_line: replyLine }));
    id += 1;
  }
}
const out = join(fixtures, 'golden-transcript.jsonl');
writeFileSync(out, lines.join('\n') + '\n');
process.stderr.write(`wrote ${lines.length} transcript entries to ${out}\n`);
