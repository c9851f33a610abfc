/** Spawns the Python fixture service once for the whole test run. */

import { spawn, type ChildProcess } from "node:child_process";
import { createServer } from "node:net";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import type { TestProject } from "vitest/node";

let service: ChildProcess | null = null;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address && typeof address === "object") {
        const port = address.port;
        probe.close(() => resolve(port));
      } else {
        reject(new Error("could not allocate a port"));
      }
    });
  });
}

async function waitForHealth(base: string, timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${base}/v1/health`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`fixture service at ${base} never became healthy`);
}

export default async function setup(project: TestProject): Promise<() => void> {
  const here = dirname(fileURLToPath(import.meta.url));
  const script = join(here, "..", "scripts", "fixture_service.py");
  const port = await freePort();
  const base = `http://127.0.0.1:${port}`;

  service = spawn("python3", [script, String(port)], { stdio: "inherit" });
  await waitForHealth(base);
  project.provide("e2eBaseUrl", base);

  return () => {
    service?.kill();
    service = null;
  };
}

declare module "vitest" {
  export interface ProvidedContext {
    e2eBaseUrl: string;
  }
}
