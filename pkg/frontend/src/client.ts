/**
 * Remote environment client: the familiar reset/step/getNextAction loop
 * against a benchtop environment server.
 *
 * All simulation semantics live server-side; this client only frames
 * requests and decodes replies, so observations are exactly the wire
 * payloads (32-bit floats, no reshaping copies beyond the typed arrays).
 */

import * as net from "node:net";

import {
  ERR_CONFIG,
  FrameReader,
  MSG_ACK,
  MSG_ACTIONS,
  MSG_CLOSE,
  MSG_CONFIG,
  MSG_ERROR,
  MSG_EXPERT,
  MSG_OBS,
  MSG_RESET,
  MSG_STEP,
  ObservationBatch,
  decodeActions,
  decodeError,
  decodeObservations,
  encodeActions,
  encodeConfig,
  packFrame,
  parseConfigText,
} from "./frames.js";

export class RemoteEnvError extends Error {
  constructor(
    public readonly code: number,
    message: string,
  ) {
    super(`[0x${code.toString(16).padStart(4, "0")}] ${message}`);
    this.name = "RemoteEnvError";
  }
}

export class ConnectionClosedError extends Error {
  constructor(message = "connection closed") {
    super(message);
    this.name = "ConnectionClosedError";
  }
}

export interface ConnectOptions {
  host?: string;
  port?: number;
  /** Number of environments in the batch. */
  n?: number;
  task: string;
  /** key=value lines, exactly as `benchtop validate` prints them. */
  configText?: string;
  timeoutMs?: number;
}

interface Pending {
  resolve: (frame: { msgType: number; payload: Buffer }) => void;
  reject: (err: Error) => void;
}

/** One connection driving a batch of n environments in lockstep. */
export class RemoteVectorEnv {
  readonly n: number;
  /** Mirrored from the CONFIG acknowledgment. */
  readonly obsSize: number;
  readonly inHandSize: number;
  readonly config: Map<string, string>;

  private constructor(
    private readonly socket: net.Socket,
    private readonly reader: FrameReader,
    private readonly pending: Pending[],
    n: number,
    config: Map<string, string>,
  ) {
    this.n = n;
    this.config = config;
    this.obsSize = Number(config.get("obs_size") ?? 128);
    this.inHandSize = Number(config.get("in_hand_size") ?? 24);
  }

  static async connect(options: ConnectOptions): Promise<RemoteVectorEnv> {
    const host = options.host ?? "127.0.0.1";
    const port = options.port ?? 9147;
    const n = options.n ?? 1;
    const socket = net.createConnection({ host, port, noDelay: true });
    const reader = new FrameReader();
    const pending: Pending[] = [];

    socket.on("data", (data) => {
      reader.push(data);
      let frame;
      try {
        while ((frame = reader.next()) !== null) {
          const waiter = pending.shift();
          if (waiter) waiter.resolve({ msgType: frame.msgType, payload: Buffer.from(frame.payload) });
        }
      } catch (err) {
        const waiter = pending.shift();
        if (waiter) waiter.reject(err as Error);
        socket.destroy();
      }
    });
    const fail = (err: Error) => {
      while (pending.length) pending.shift()!.reject(err);
    };
    socket.on("error", (err) => fail(err));
    socket.on("close", () => fail(new ConnectionClosedError()));

    await new Promise<void>((resolve, reject) => {
      socket.once("connect", resolve);
      socket.once("error", reject);
      if (options.timeoutMs) {
        socket.setTimeout(options.timeoutMs, () =>
          reject(new ConnectionClosedError("connect timeout")),
        );
      }
    });

    const env = new RemoteVectorEnv(socket, reader, pending, n, new Map());
    const reply = await env.request(
      MSG_CONFIG,
      encodeConfig(n, options.task, options.configText ?? ""),
    );
    if (reply.msgType !== MSG_ACK) {
      socket.destroy();
      throw RemoteVectorEnv.asError(reply);
    }
    const config = parseConfigText(reply.payload.toString("utf-8"));
    return new RemoteVectorEnv(socket, reader, pending, n, config);
  }

  private request(msgType: number, payload?: Buffer): Promise<{ msgType: number; payload: Buffer }> {
    return new Promise((resolve, reject) => {
      if (this.socket.destroyed) {
        reject(new ConnectionClosedError());
        return;
      }
      this.pending.push({ resolve, reject });
      this.socket.write(packFrame(msgType, payload));
    });
  }

  private static asError(reply: { msgType: number; payload: Buffer }): Error {
    if (reply.msgType === MSG_ERROR) {
      const { code, message } = decodeError(reply.payload);
      return new RemoteEnvError(code, message);
    }
    return new RemoteEnvError(ERR_CONFIG, `unexpected reply type 0x${reply.msgType.toString(16)}`);
  }

  private decodeObs(reply: { msgType: number; payload: Buffer }): ObservationBatch {
    if (reply.msgType !== MSG_OBS) throw RemoteVectorEnv.asError(reply);
    return decodeObservations(reply.payload, this.n, this.obsSize, this.inHandSize);
  }

  /** Start fresh episodes in every environment of the batch. */
  async reset(): Promise<ObservationBatch> {
    return this.decodeObs(await this.request(MSG_RESET));
  }

  /**
   * Step every environment with canonical (p, x, y, z, r) action rows
   * (NaN in slots the action sequence does not use). Finished episodes
   * auto-reset server-side; `dones` marks them.
   */
  async step(actions: Float32Array | number[][]): Promise<ObservationBatch> {
    const flat =
      actions instanceof Float32Array
        ? actions
        : Float32Array.from(actions.flat());
    if (flat.length !== this.n * 5) {
      throw new RangeError(`expected ${this.n}x5 actions, got ${flat.length} floats`);
    }
    return this.decodeObs(await this.request(MSG_STEP, encodeActions(flat)));
  }

  /** Scripted-expert actions for the current states, one f32[5] row per env. */
  async getNextAction(): Promise<Float32Array> {
    const reply = await this.request(MSG_EXPERT);
    if (reply.msgType !== MSG_ACTIONS) throw RemoteVectorEnv.asError(reply);
    return decodeActions(reply.payload, this.n);
  }

  async close(): Promise<void> {
    if (this.socket.destroyed) return;
    try {
      await this.request(MSG_CLOSE);
    } catch {
      // the server may hang up right after acknowledging
    } finally {
      this.socket.destroy();
    }
  }
}

export const connect = RemoteVectorEnv.connect;
