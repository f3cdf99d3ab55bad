export {
  ConnectionClosedError,
  RemoteEnvError,
  RemoteVectorEnv,
  connect,
  type ConnectOptions,
} from "./client.js";
export {
  ERR_ARITY,
  ERR_CONFIG,
  ERR_MALFORMED,
  ERR_ORDER,
  ERR_UNKNOWN_TYPE,
  FrameReader,
  decodeActions,
  decodeError,
  decodeObservations,
  encodeActions,
  encodeConfig,
  packFrame,
  parseConfigText,
  type Frame,
  type ObservationBatch,
} from "./frames.js";
