/** Transports: line-delimited JSON over stdio or a single TCP connection. */

import { createInterface } from 'node:readline';
import { createServer } from 'node:net';
import { BridgeSession } from './session.js';

export async function serveStdio(session: BridgeSession): Promise<void> {
  process.stdout.write(session.helloLine() + '\n');
  const rl = createInterface({ input: process.stdin });
  for await (const line of rl) {
    if (!line.trim()) continue;
    const reply = session.handleLine(line);
    if (reply === null) break;
    process.stdout.write(reply + '\n');
  }
  rl.close();
  process.stdin.destroy(); // otherwise the open pipe keeps the loop alive
}

export function serveTcp(
  makeSession: () => BridgeSession,
  port: number,
  onListening?: (port: number) => void,
): void {
  const server = createServer((socket) => {
    const session = makeSession();
    socket.write(session.helloLine() + '\n');
    const rl = createInterface({ input: socket });
    rl.on('line', (line) => {
      if (!line.trim()) return;
      const reply = session.handleLine(line);
      if (reply === null) {
        socket.end();
        server.close();
        return;
      }
      socket.write(reply + '\n');
    });
    socket.on('close', () => server.close());
    socket.on('error', () => server.close());
  });
  server.listen(port, () => {
    const address = server.address();
    if (address && typeof address === 'object' && onListening) {
      onListening(address.port);
    }
  });
}
