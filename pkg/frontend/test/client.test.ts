/**
 * Integration tests against a live environment server (spawned as a child
 * process). Covers the agent-loop acceptance check: ten expert
 * block-stacking episodes with shape-correct 32-bit observations.
 */

import { type ChildProcess, spawn } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { RemoteEnvError, RemoteVectorEnv, connect } from "../src/client.js";
import { ERR_ARITY, ERR_ORDER } from "../src/frames.js";

let server: ChildProcess;
let port = 0;

const FAST_CONFIG = "obs_size=48\nin_hand_size=12\n";

beforeAll(async () => {
  server = spawn("python3", ["-m", "benchtop.cli", "serve", "--port", "0"], {
    stdio: ["ignore", "pipe", "inherit"],
  });
  port = await new Promise<number>((resolve, reject) => {
    let buffer = "";
    server.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/READY [\d.]+:(\d+)/);
      if (match) resolve(Number(match[1]));
    });
    server.once("exit", (code) => reject(new Error(`server exited early (${code})`)));
    setTimeout(() => reject(new Error("server startup timeout")), 20000);
  });
}, 30000);

afterAll(() => {
  server?.kill();
});

describe("agent loop", () => {
  it(
    "runs 10 expert block_stacking episodes with 10/10 successes",
    async () => {
      const env = await connect({ port, n: 1, task: "block_stacking" });
      expect(env.obsSize).toBe(128);
      expect(env.inHandSize).toBe(24);

      let obs = await env.reset();
      expect(obs.heightmaps).toBeInstanceOf(Float32Array);
      expect(obs.heightmaps.length).toBe(1 * 128 * 128);
      expect(obs.shape).toEqual({ n: 1, obsSize: 128, inHandSize: 24 });

      let successes = 0;
      for (let episode = 0; episode < 10; episode++) {
        let done = false;
        let reward = 0;
        while (!done) {
          const action = await env.getNextAction();
          expect(action.length).toBe(5);
          obs = await env.step(action);
          expect(obs.heightmaps.length).toBe(128 * 128);
          expect(obs.inHand.length).toBe(24 * 24);
          reward = obs.rewards[0];
          done = obs.dones[0] === 1;
        }
        if (reward === 1.0) successes += 1;
        // Auto-reset: the returned observation already belongs to the next
        // episode, so the loop just continues.
      }
      expect(successes).toBe(10);
      await env.close();
    },
    120000,
  );

  it("mirrors server error codes as typed exceptions", async () => {
    const env = await connect({ port, n: 1, task: "block_stacking", configText: FAST_CONFIG });
    // step before reset -> session-order error
    const bad = new Float32Array([NaN, 0.45, 0, NaN, 0]);
    await expect(env.step(bad)).rejects.toSatisfy(
      (err: unknown) => err instanceof RemoteEnvError && err.code === ERR_ORDER,
    );
    await env.close();
  });

  it("rejects unknown tasks at connect time", async () => {
    await expect(connect({ port, n: 1, task: "no_such_task" })).rejects.toBeInstanceOf(
      RemoteEnvError,
    );
  });

  it("surfaces arity mismatches from multi-env sessions", async () => {
    const env = await connect({ port, n: 2, task: "block_stacking", configText: FAST_CONFIG });
    await env.reset();
    // A 1-action STEP against a 2-env session fails client-side.
    const actions = new Float32Array([NaN, 0.45, 0, NaN, 0]);
    await expect(env.step(actions)).rejects.toBeInstanceOf(RangeError);
    const padded = new Float32Array(10).fill(NaN);
    padded.set([NaN, 0.45, 0, NaN, 0]);
    padded.set([NaN, 0.4, 0.05, NaN, 0], 5);
    const obs = await env.step(padded);
    expect(obs.rewards.length).toBe(2);
    await env.close();
  });

  it("vectorized session steps in lockstep", async () => {
    const env = await connect({ port, n: 3, task: "house_building_2", configText: FAST_CONFIG });
    const first = await env.reset();
    expect(first.heightmaps.length).toBe(3 * 48 * 48);
    for (let t = 0; t < 4; t++) {
      const actions = await env.getNextAction();
      expect(actions.length).toBe(15);
      const obs = await env.step(actions);
      if (t === 3) {
        // The expert solves this task in exactly four steps in every env.
        expect(Array.from(obs.rewards)).toEqual([1, 1, 1]);
        expect(Array.from(obs.dones)).toEqual([1, 1, 1]);
      }
    }
    await env.close();
  });
});
