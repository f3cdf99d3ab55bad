/**
 * Frame and payload codecs for the benchtop environment protocol.
 *
 * Every frame is `length:u32 | type:u8 | payload` with little-endian
 * integers and floats; `length` counts payload bytes only and is capped at
 * 64 MiB. See the server README for the message catalogue.
 */

export const MAX_PAYLOAD = 64 * 1024 * 1024;

export const MSG_CONFIG = 0x01;
export const MSG_RESET = 0x02;
export const MSG_STEP = 0x03;
export const MSG_EXPERT = 0x04;
export const MSG_CLOSE = 0x05;
export const MSG_ACK = 0x80;
export const MSG_OBS = 0x81;
export const MSG_ACTIONS = 0x82;
export const MSG_ERROR = 0xff;

export const ERR_ORDER = 0x0001;
export const ERR_MALFORMED = 0x0002;
export const ERR_ARITY = 0x0003;
export const ERR_UNKNOWN_TYPE = 0x0004;
export const ERR_CONFIG = 0x0005;

export interface Frame {
  msgType: number;
  payload: Buffer;
}

export function packFrame(msgType: number, payload: Buffer = Buffer.alloc(0)): Buffer {
  if (payload.length > MAX_PAYLOAD) {
    throw new RangeError(`payload of ${payload.length} bytes exceeds the 64 MiB cap`);
  }
  const header = Buffer.alloc(5);
  header.writeUInt32LE(payload.length, 0);
  header.writeUInt8(msgType, 4);
  return Buffer.concat([header, payload]);
}

/** Incremental frame decoder over a growing byte stream. */
export class FrameReader {
  private chunks: Buffer[] = [];
  private size = 0;

  push(data: Buffer): void {
    this.chunks.push(data);
    this.size += data.length;
  }

  /** Returns the next complete frame, or null until more bytes arrive. */
  next(): Frame | null {
    if (this.size < 5) return null;
    const buf = this.chunks.length === 1 ? this.chunks[0] : Buffer.concat(this.chunks);
    this.chunks = [buf];
    const length = buf.readUInt32LE(0);
    if (length > MAX_PAYLOAD) {
      throw new RangeError(`frame length ${length} exceeds the 64 MiB cap`);
    }
    if (buf.length < 5 + length) return null;
    const frame = {
      msgType: buf.readUInt8(4),
      payload: buf.subarray(5, 5 + length),
    };
    const rest = buf.subarray(5 + length);
    this.chunks = rest.length ? [Buffer.from(rest)] : [];
    this.size = rest.length;
    return frame;
  }
}

export function encodeConfig(n: number, task: string, configText: string): Buffer {
  const taskBytes = Buffer.from(task, "utf-8");
  const head = Buffer.alloc(4);
  head.writeUInt16LE(n, 0);
  head.writeUInt16LE(taskBytes.length, 2);
  return Buffer.concat([head, taskBytes, Buffer.from(configText, "utf-8")]);
}

export function encodeActions(actions: Float32Array): Buffer {
  if (actions.length % 5 !== 0) {
    throw new RangeError(`actions must be n*5 floats, got ${actions.length}`);
  }
  const buf = Buffer.alloc(actions.length * 4);
  for (let i = 0; i < actions.length; i++) {
    buf.writeFloatLE(actions[i], i * 4);
  }
  return buf;
}

export function decodeActions(payload: Buffer, n: number): Float32Array {
  if (payload.length !== n * 20) {
    throw new RangeError(`ACTIONS payload is ${payload.length} bytes, expected ${n * 20}`);
  }
  const out = new Float32Array(n * 5);
  for (let i = 0; i < out.length; i++) {
    out[i] = payload.readFloatLE(i * 4);
  }
  return out;
}

export interface ObservationBatch {
  /** Row-major heightmaps, one per environment: [n, obsSize, obsSize]. */
  heightmaps: Float32Array;
  /** In-hand crops: [n, inHandSize, inHandSize]. */
  inHand: Float32Array;
  /** 1 where the gripper holds an object. */
  gripper: Uint8Array;
  rewards: Float32Array;
  dones: Uint8Array;
  shape: { n: number; obsSize: number; inHandSize: number };
}

export function decodeObservations(
  payload: Buffer,
  n: number,
  obsSize: number,
  inHandSize: number,
): ObservationBatch {
  const hmFloats = obsSize * obsSize;
  const ihFloats = inHandSize * inHandSize;
  const per = 4 * (hmFloats + ihFloats) + 1 + 4 + 1;
  if (payload.length !== n * per) {
    throw new RangeError(`OBS payload is ${payload.length} bytes, expected ${n * per}`);
  }
  const heightmaps = new Float32Array(n * hmFloats);
  const inHand = new Float32Array(n * ihFloats);
  const gripper = new Uint8Array(n);
  const rewards = new Float32Array(n);
  const dones = new Uint8Array(n);
  let pos = 0;
  for (let i = 0; i < n; i++) {
    // The payload is little-endian f32, matching the platform typed-array
    // layout on every Node target we support; copy via a DataView-free path.
    for (let k = 0; k < hmFloats; k++, pos += 4) {
      heightmaps[i * hmFloats + k] = payload.readFloatLE(pos);
    }
    for (let k = 0; k < ihFloats; k++, pos += 4) {
      inHand[i * ihFloats + k] = payload.readFloatLE(pos);
    }
    gripper[i] = payload.readUInt8(pos);
    pos += 1;
    rewards[i] = payload.readFloatLE(pos);
    pos += 4;
    dones[i] = payload.readUInt8(pos);
    pos += 1;
  }
  return {
    heightmaps,
    inHand,
    gripper,
    rewards,
    dones,
    shape: { n, obsSize, inHandSize },
  };
}

export function decodeError(payload: Buffer): { code: number; message: string } {
  if (payload.length < 2) {
    throw new RangeError("ERROR payload too short");
  }
  return {
    code: payload.readUInt16LE(0),
    message: payload.subarray(2).toString("utf-8"),
  };
}

/** Parse the resolved key=value config text from a CONFIG acknowledgment. */
export function parseConfigText(text: string): Map<string, string> {
  const out = new Map<string, string>();
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed || trimmed.startsWith("#")) continue;
    const eq = trimmed.indexOf("=");
    if (eq < 0) continue;
    out.set(trimmed.slice(0, eq).trim(), trimmed.slice(eq + 1).trim());
  }
  return out;
}
