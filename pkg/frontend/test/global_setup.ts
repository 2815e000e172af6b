// Boots the Python assist service once for the integration tests.

import { spawn, type ChildProcess } from "node:child_process";
import type { GlobalSetupContext } from "vitest/node";

declare module "vitest" {
  export interface ProvidedContext {
    serviceUrl: string;
  }
}

async function waitHealthy(url: string, timeoutMs: number): Promise<boolean> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${url}/healthz`);
      if (resp.ok) return true;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  return false;
}

export default async function setup({ provide }: GlobalSetupContext): Promise<() => void> {
  const port = 21000 + Math.floor(Math.random() * 20000);
  const url = `http://127.0.0.1:${port}`;
  const child: ChildProcess = spawn(
    "python3",
    ["-m", "assist2plan.cli", "serve", "--port", String(port), "--seed", "0"],
    { stdio: ["ignore", "pipe", "pipe"], cwd: new URL("..", import.meta.url).pathname },
  );
  child.stderr?.on("data", (d: Buffer) => {
    if (process.env.SERVICE_DEBUG) console.error(`[service] ${d}`);
  });

  const healthy = await waitHealthy(url, 30_000);
  if (!healthy) {
    child.kill("SIGKILL");
    throw new Error("assist service did not come up");
  }
  provide("serviceUrl", url);
  return () => {
    child.kill("SIGTERM");
  };
}
