// Spawns the real python services (tagsim, simopac, device) for the
// integration run and tears them down afterwards.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";

const HELPERS = path.dirname(fileURLToPath(import.meta.url));
const PYTHON = process.env.PYTHON ?? "python3";

export interface Stack {
  deviceUrl: string;
  simopacUrl: string;
  vitalsPort: number;
  readerPort: number;
  seedTag(uid: number, serial: number): void;
  removeTag(uid: number): void;
  emitVitals(lines: string[]): Promise<void>;
  stop(): void;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const server = net.createServer();
    server.on("error", reject);
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as net.AddressInfo).port;
      server.close(() => resolve(port));
    });
  });
}

async function waitHttp(url: string, timeoutMs = 20_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(url);
      if (response.ok) return;
    } catch (error) {
      lastError = error;
    }
    await new Promise((r) => setTimeout(r, 100));
  }
  throw new Error(`service at ${url} never came up: ${lastError}`);
}

export async function startStack(): Promise<Stack> {
  const tmp = mkdtempSync(path.join(os.tmpdir(), "cipdev-ui-"));
  const [readerPort, vitalsPort, devicePort, mllpPort, simopacHttpPort] =
    await Promise.all([freePort(), freePort(), freePort(), freePort(), freePort()]);

  const simopacConfig = path.join(tmp, "simopac.json");
  writeFileSync(
    simopacConfig,
    JSON.stringify({
      simopac: {
        mllp_port: mllpPort,
        http_port: simopacHttpPort,
        data_dir: path.join(tmp, "ehr"),
        patients: [
          { serial: 42, display_name: "Popescu, Ion", birth_year: 1974 },
        ],
      },
      users: [
        { user: "dr.pop", password: "parola1", role: "physician" },
        { user: "device1", password: "svc-secret", role: "physician" },
      ],
    }),
  );
  const deviceConfig = path.join(tmp, "device.json");
  writeFileSync(
    deviceConfig,
    JSON.stringify({
      device: { http_port: devicePort, poll_interval: 0.1 },
      reader: { port: readerPort },
      vitals: { port: vitalsPort, window_size: 10 },
      simopac: {
        mllp_port: mllpPort,
        service_user: "device1",
        service_password: "svc-secret",
      },
      users: [
        { user: "dr.pop", password: "parola1", role: "physician" },
        { user: "asist", password: "parola2", role: "viewer" },
      ],
    }),
  );

  const procs: ChildProcess[] = [];
  const run = (...args: string[]) => {
    const proc = spawn(PYTHON, ["-m", "cipdev.cli", ...args], {
      stdio: "ignore",
    });
    procs.push(proc);
    return proc;
  };

  run("tagsim", "--port", String(readerPort));
  run("simopac", "--config", simopacConfig);
  await waitHttp(`http://127.0.0.1:${simopacHttpPort}/health`);
  run("device", "--config", deviceConfig);
  const deviceUrl = `http://127.0.0.1:${devicePort}`;
  await waitHttp(`${deviceUrl}/health`);

  const tagctl = (...args: string[]) => {
    const result = spawnSync(
      PYTHON,
      [path.join(HELPERS, "tagctl.py"), ...args],
      { encoding: "utf-8" },
    );
    if (result.status !== 0) {
      throw new Error(`tagctl failed: ${result.stderr}`);
    }
  };

  return {
    deviceUrl,
    simopacUrl: `http://127.0.0.1:${simopacHttpPort}`,
    vitalsPort,
    readerPort,
    seedTag: (uid, serial) =>
      tagctl(
        "add",
        "--reader-port", String(readerPort),
        "--uid", String(uid),
        "--serial", String(serial),
        "--uri", `http://127.0.0.1:${simopacHttpPort}`,
      ),
    removeTag: (uid) =>
      tagctl("remove", "--reader-port", String(readerPort), "--uid", String(uid)),
    emitVitals: (lines) =>
      new Promise<void>((resolve, reject) => {
        const sock = net.createConnection(vitalsPort, "127.0.0.1", () => {
          sock.end(lines.join("\n") + "\n", () => resolve());
        });
        sock.on("error", reject);
      }),
    stop: () => {
      for (const proc of procs) proc.kill("SIGTERM");
      rmSync(tmp, { recursive: true, force: true });
    },
  };
}
