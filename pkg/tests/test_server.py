"""Wire protocol and server tests."""

import struct
import sys
import threading

import numpy as np
import pytest

from benchtop import protocol as proto
from benchtop.config import EnvConfig, config_to_text
from benchtop.runner import create_envs
from benchtop.server import start_background

from wirehelper import WireClient, WireError

FAST_TEXT = config_to_text(EnvConfig(obs_size=48, in_hand_size=12))


@pytest.fixture(scope="module")
def server():
    srv, port = start_background()
    yield ("127.0.0.1", port)
    srv.shutdown()
    srv.server_close()


class TestSession:
    def test_config_reset_obs_shape(self, server):
        client = WireClient(*server)
        assert client.configure(1, "block_stacking") is None
        assert client.config.obs_size == 128
        heightmaps, in_hands, grippers, rewards, dones = client.reset()
        assert heightmaps.shape == (1, 128, 128)
        assert in_hands.shape == (1, 24, 24)
        assert grippers[0] == 0 and rewards[0] == 0.0 and dones[0] == 0
        client.close()

    def test_expert_loop_reaches_reward(self, server):
        client = WireClient(*server)
        client.configure(1, "block_stacking", FAST_TEXT)
        client.reset()
        reward = 0.0
        for _ in range(6):
            actions = client.expert()
            _, _, _, rewards, dones = client.step(actions)
            reward = rewards[0]
        assert reward == 1.0 and dones[0] == 1
        client.close()

    def test_step_before_config(self, server):
        client = WireClient(*server)
        msg_type, payload = client.request(proto.MSG_STEP, b"")
        assert msg_type == proto.MSG_ERROR
        code, _ = proto.decode_error(payload)
        assert code == proto.ERR_ORDER
        client.close()

    def test_step_before_reset(self, server):
        client = WireClient(*server)
        client.configure(1, "block_stacking", FAST_TEXT)
        msg_type, payload = client.request(
            proto.MSG_STEP, proto.encode_actions(np.zeros((1, 5), dtype=np.float32))
        )
        assert msg_type == proto.MSG_ERROR
        assert proto.decode_error(payload)[0] == proto.ERR_ORDER
        client.close()

    def test_arity_mismatch(self, server):
        client = WireClient(*server)
        client.configure(5, "block_stacking", FAST_TEXT)
        client.reset()
        with pytest.raises(WireError) as err:
            client.step(np.zeros((3, 5), dtype=np.float32))
        assert err.value.code == proto.ERR_ARITY
        client.close()

    def test_unknown_task(self, server):
        client = WireClient(*server)
        result = client.configure(1, "no_such_task")
        assert result is not None and result[0] == proto.ERR_CONFIG
        client.close()

    def test_unknown_message_type_survives(self, server):
        client = WireClient(*server)
        msg_type, payload = client.request(0x6E)
        assert msg_type == proto.MSG_ERROR
        assert proto.decode_error(payload)[0] == proto.ERR_UNKNOWN_TYPE
        # The connection is still usable.
        assert client.configure(1, "block_stacking", FAST_TEXT) is None
        client.close()

    def test_oversized_frame_closes_connection(self, server):
        client = WireClient(*server)
        client.sock.sendall(struct.pack("<IB", proto.MAX_PAYLOAD + 1, proto.MSG_RESET))
        frame = proto.read_frame(client._read_exact)
        assert frame is not None
        msg_type, payload = frame
        assert msg_type == proto.MSG_ERROR
        assert proto.decode_error(payload)[0] == proto.ERR_MALFORMED
        assert client._read_exact(5) == b""  # server hung up
        client.sock.close()


class TestStdio:
    def test_stdio_session(self):
        import subprocess

        proc = subprocess.Popen(
            [sys.executable, "-m", "benchtop.cli", "serve", "--stdio"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        try:
            def read_exact(n):
                return proc.stdout.read(n)

            def request(msg_type, payload=b""):
                proc.stdin.write(proto.pack_frame(msg_type, payload))
                proc.stdin.flush()
                frame = proto.read_frame(read_exact)
                assert frame is not None
                return frame

            msg_type, payload = request(
                proto.MSG_CONFIG, proto.encode_config(1, "block_stacking", FAST_TEXT)
            )
            assert msg_type == proto.MSG_ACK
            msg_type, payload = request(proto.MSG_RESET)
            assert msg_type == proto.MSG_OBS
            per = 4 * (48 * 48 + 12 * 12) + 1 + 4 + 1
            assert len(payload) == per
            msg_type, _ = request(proto.MSG_CLOSE)
            assert msg_type == proto.MSG_ACK
            proc.stdin.close()
            proc.wait(timeout=10)
        finally:
            if proc.poll() is None:
                proc.kill()


class TestTransparency:
    def test_bitwise_equal_to_in_process(self, server):
        config = EnvConfig(obs_size=48, in_hand_size=12, seed=5)
        text = config_to_text(config)
        episodes = 4

        vec = create_envs(1, "house_building_2", config)
        local = []
        vec.reset()
        done_count = 0
        while done_count < episodes:
            actions = vec.get_next_action()
            result = vec.step(actions)
            local.append(
                (
                    actions.copy(),
                    result.observations[0].heightmap.copy(),
                    result.observations[0].in_hand.copy(),
                    float(result.rewards[0]),
                    bool(result.dones[0]),
                )
            )
            done_count += int(result.dones[0])
        vec.close()

        client = WireClient(*server)
        client.configure(1, "house_building_2", text)
        client.reset()
        remote = []
        done_count = 0
        while done_count < episodes:
            actions = client.expert()
            heightmaps, in_hands, grippers, rewards, dones = client.step(actions)
            remote.append(
                (
                    actions.copy(),
                    heightmaps[0].copy(),
                    in_hands[0].copy(),
                    float(rewards[0]),
                    bool(dones[0]),
                )
            )
            done_count += int(dones[0])
        client.close()

        assert len(local) == len(remote)
        for (a1, h1, i1, r1, d1), (a2, h2, i2, r2, d2) in zip(local, remote):
            assert np.array_equal(a1, a2, equal_nan=True)
            assert h1.tobytes() == h2.tobytes()
            assert i1.tobytes() == i2.tobytes()
            assert r1 == r2 and d1 == d2

    def test_concurrent_sessions_isolated(self, server):
        results = {}

        def run(label, seed):
            client = WireClient(*server)
            client.configure(
                1,
                "block_stacking",
                config_to_text(EnvConfig(obs_size=48, in_hand_size=12, seed=seed)),
            )
            client.reset()
            maps = []
            for _ in range(6):
                actions = client.expert()
                heightmaps, *_ = client.step(actions)
                maps.append(heightmaps[0].copy())
            results[label] = maps
            client.close()

        threads = [
            threading.Thread(target=run, args=(f"a{i}", 100)) for i in range(2)
        ] + [threading.Thread(target=run, args=("b", 200))]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        # Same seed, concurrent: identical streams. Different seed: different.
        for m1, m2 in zip(results["a0"], results["a1"]):
            assert np.array_equal(m1, m2)
        assert any(
            not np.array_equal(m1, m2) for m1, m2 in zip(results["a0"], results["b"])
        )
