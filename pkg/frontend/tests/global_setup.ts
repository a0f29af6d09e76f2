/**
 * Boots one real service process for the end-to-end test: builds a
 * 200-record corrupted dataset with the backend's own tooling, starts the
 * HTTP service on a free port, waits until it answers, and tears it down
 * after the run. Connection details are dropped in tests/.e2e.json.
 */

import { type ChildProcess, spawn, spawnSync } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO_ROOT = join(HERE, "..", "..");
const INFO_PATH = join(HERE, ".e2e.json");

const DATASET_SCRIPT = `
import sys
import numpy as np
from cleantrain.dataset import CorruptionSpec, corrupt, from_arrays, save_csv

out = sys.argv[1]
rng = np.random.default_rng(7)
X = rng.standard_normal((200, 3))
Y = X @ np.array([1.0, -2.0, 0.5]) + 0.05 * rng.standard_normal(200)
ds = corrupt(from_arrays(X, Y), CorruptionSpec(kind="random", rate=0.15, seed=2, outlier_scale=3.0))
save_csv(ds, out)
`;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const address = srv.address();
      if (address && typeof address === "object") {
        const port = address.port;
        srv.close(() => resolve(port));
      } else {
        srv.close(() => reject(new Error("no port")));
      }
    });
  });
}

async function waitReady(baseUrl: string, child: ChildProcess, ms = 30000): Promise<void> {
  const start = Date.now();
  while (Date.now() - start < ms) {
    if (child.exitCode !== null) {
      throw new Error(`service exited early with code ${child.exitCode}`);
    }
    try {
      const res = await fetch(`${baseUrl}/sessions/warmup-probe`);
      if (res.status === 404) return;
    } catch {
      // not listening yet
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("service did not come up in time");
}

export default async function setup(): Promise<() => void> {
  const workDir = mkdtempSync(join(tmpdir(), "cleantrain-ui-"));
  const datasetPath = join(workDir, "dirty200.csv");

  const gen = spawnSync("python3", ["-c", DATASET_SCRIPT, datasetPath], {
    cwd: REPO_ROOT,
    encoding: "utf8",
  });
  if (gen.status !== 0) {
    throw new Error(`dataset generation failed:\n${gen.stderr}`);
  }

  const port = await freePort();
  const baseUrl = `http://127.0.0.1:${port}`;
  const server = spawn(
    "python3",
    ["-m", "cleantrain.cli", "serve", "--host", "127.0.0.1", "--port", String(port)],
    { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
  );
  let serverLog = "";
  server.stdout?.on("data", (chunk) => (serverLog += chunk));
  server.stderr?.on("data", (chunk) => (serverLog += chunk));

  try {
    await waitReady(baseUrl, server);
  } catch (err) {
    server.kill("SIGTERM");
    throw new Error(`${(err as Error).message}\nserver log:\n${serverLog}`);
  }

  writeFileSync(INFO_PATH, JSON.stringify({ baseUrl, datasetPath }, null, 2));

  return () => {
    server.kill("SIGTERM");
    rmSync(workDir, { recursive: true, force: true });
    rmSync(INFO_PATH, { force: true });
  };
}
