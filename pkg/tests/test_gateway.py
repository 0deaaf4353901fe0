"""Gateway: healthz, session protocol, loopback latency, reconnect resume,
and schema round trips."""

import asyncio
import json
import time
import urllib.request

import pytest

from neuroguide.gateway import GatewayServer
from neuroguide.sim import SessionConfig, AgentProfile


def session_config(smoke_checklist, condition="baseline", **kwargs) -> dict:
    cfg = SessionConfig(
        condition=condition,
        seed=1,
        checklist=smoke_checklist,
        agent=AgentProfile(),  # unused in human mode but serialized
        **kwargs,
    )
    return cfg.to_jsonable()


async def recv_until(ws, predicate, timeout_s=5.0):
    deadline = time.monotonic() + timeout_s
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TimeoutError("no matching message")
        raw = await asyncio.wait_for(ws.recv(), timeout=remaining)
        msg = json.loads(raw)
        if predicate(msg):
            return msg


def run_gateway_test(coro_factory, models):
    async def main():
        server = GatewayServer(models=models)
        await server.start()
        try:
            return await coro_factory(server)
        finally:
            await server.stop()

    return asyncio.run(main())


class TestGateway:
    def test_healthz(self, models):
        async def scenario(server):
            def probe():
                with urllib.request.urlopen(
                    f"http://127.0.0.1:{server.port}/healthz", timeout=5
                ) as resp:
                    return resp.status, resp.read()

            return await asyncio.get_running_loop().run_in_executor(None, probe)

        status, body = run_gateway_test(scenario, models)
        assert status == 200
        assert body == b"ok\n"

    def test_action_advances_checklist_within_200ms(self, models, smoke_checklist):
        async def scenario(server):
            import websockets

            async with websockets.connect(
                f"ws://127.0.0.1:{server.port}/session"
            ) as ws:
                await ws.send(json.dumps({
                    "type": "start_session",
                    "config": session_config(smoke_checklist),
                }))
                started = await recv_until(ws, lambda m: m["type"] == "session_started")
                assert started["checklist"]["procedures"]
                assert started["condition"] == "baseline"
                snap = await recv_until(ws, lambda m: m["type"] == "checklist_state")
                assert snap["active_expected_value"] == "ON"
                target = snap["active_target_control"]
                # wait for the task phase (calibration runs 12 s of logical
                # time; wall-paced at 10 Hz)
                while server.session._tick * 1e8 < server.session._task_start_ns:
                    await asyncio.sleep(0.05)
                sent = time.monotonic()
                await ws.send(json.dumps({
                    "type": "action", "control_id": target, "value": "ON",
                }))
                advanced = await recv_until(
                    ws,
                    lambda m: m["type"] == "checklist_state" and m["done_count"] == 1,
                )
                latency = time.monotonic() - sent
                return latency, advanced

        latency, advanced = run_gateway_test(scenario, models)
        assert latency <= 0.2, f"loopback latency {latency * 1e3:.0f} ms"
        assert advanced["active_step_id"] == "P2.S1"

    def test_undeclared_control_rejected_session_unaffected(self, models,
                                                            smoke_checklist):
        async def scenario(server):
            import websockets

            async with websockets.connect(
                f"ws://127.0.0.1:{server.port}/session"
            ) as ws:
                await ws.send(json.dumps({
                    "type": "start_session",
                    "config": session_config(smoke_checklist),
                }))
                await recv_until(ws, lambda m: m["type"] == "checklist_state")
                await ws.send(json.dumps({
                    "type": "action", "control_id": "ghost_switch", "value": "ON",
                }))
                violation = await recv_until(
                    ws, lambda m: m["type"] == "protocol_violation"
                )
                assert "ghost_switch" in violation["reason"]
                assert not server.session.ended
                return violation

        run_gateway_test(scenario, models)

    def test_disconnect_pauses_reconnect_resumes_with_snapshot(self, models,
                                                               smoke_checklist):
        async def scenario(server):
            import websockets

            url = f"ws://127.0.0.1:{server.port}/session"
            async with websockets.connect(url) as ws:
                await ws.send(json.dumps({
                    "type": "start_session",
                    "config": session_config(smoke_checklist),
                }))
                await recv_until(ws, lambda m: m["type"] == "checklist_state")
            await asyncio.sleep(0.3)  # handler cleanup pauses the loop
            assert server.session._pause.is_set()
            tick_at_pause = server.session._tick
            await asyncio.sleep(0.3)
            assert server.session._tick - tick_at_pause <= 1  # paused: no progress
            async with websockets.connect(url) as ws2:
                snap = await recv_until(ws2, lambda m: m["type"] == "checklist_state")
                assert snap["total_steps"] == 9
                await asyncio.sleep(0.3)
                assert not server.session._pause.is_set()
                assert server.session._tick > tick_at_pause
            return True

        assert run_gateway_test(scenario, models)

    def test_heartbeat_arrives(self, models, smoke_checklist):
        async def scenario(server):
            import websockets

            async with websockets.connect(
                f"ws://127.0.0.1:{server.port}/session"
            ) as ws:
                await ws.send(json.dumps({
                    "type": "start_session",
                    "config": session_config(smoke_checklist),
                }))
                beat = await recv_until(ws, lambda m: m["type"] == "heartbeat",
                                        timeout_s=3.0)
                return beat

        assert run_gateway_test(scenario, models)["type"] == "heartbeat"

    def test_malformed_json_closes_connection(self, models, smoke_checklist):
        async def scenario(server):
            import websockets

            async with websockets.connect(
                f"ws://127.0.0.1:{server.port}/session"
            ) as ws:
                await ws.send("this is not json {")
                violation = await recv_until(
                    ws, lambda m: m["type"] == "protocol_violation"
                )
                assert "malformed" in violation["reason"]
                with pytest.raises(websockets.exceptions.ConnectionClosed):
                    for _ in range(50):
                        await asyncio.wait_for(ws.recv(), timeout=1.0)
            return True

        assert run_gateway_test(scenario, models)

    def test_static_serving(self, models, tmp_path):
        (tmp_path / "index.html").write_text("<html>console</html>")

        async def scenario_factory():
            server = GatewayServer(static_dir=str(tmp_path), models=models)
            await server.start()
            try:
                def probe(path):
                    with urllib.request.urlopen(
                        f"http://127.0.0.1:{server.port}{path}", timeout=5
                    ) as resp:
                        return resp.status, resp.read()

                loop = asyncio.get_running_loop()
                ok = await loop.run_in_executor(None, probe, "/index.html")
                root = await loop.run_in_executor(None, probe, "/")
                return ok, root
            finally:
                await server.stop()

        ok, root = asyncio.run(scenario_factory())
        assert ok == (200, b"<html>console</html>")
        assert root == (200, b"<html>console</html>")


class TestHumanSessionHeadless:
    """Drive HumanSession without wall pacing: logical-time behavior checks."""

    def test_human_session_records_agent_shaped_bag(self, models, smoke_checklist):
        from neuroguide.gateway import HumanSession
        from neuroguide.bus import Bag

        pushes = []
        cfg = SessionConfig(condition="baseline", seed=2, checklist=smoke_checklist)
        session = HumanSession(cfg, pushes.append, models=models, realtime=False)
        import io
        session._sink = io.BytesIO()
        from neuroguide.bus import BagWriter, STANDARD_TOPICS
        session._writer = BagWriter(session._sink, cfg.session_id, 0, STANDARD_TOPICS)
        session.bus.attach_recorder(session._writer)
        # run calibration plus a little task time, acting on each active step
        spec = cfg.checklist_spec()
        for _ in range(2000):
            if session.engine.tree.complete:
                break
            active = session.engine.tree.active_step
            if (active is not None
                    and session._tick * 1e8 >= session._task_start_ns
                    and session._tick % 25 == 0):
                session.submit_action(active.target_control, active.expected_value)
            session._step_once()
        session._finish()
        assert session.engine.tree.complete
        bag = Bag.from_bytes(session._sink.getvalue())
        assert set(bag.topics) == set(STANDARD_TOPICS)
        assert bag.topic_counts["workload"] > 0
        ended = [p for p in pushes if p["type"] == "session_ended"]
        assert len(ended) == 1
        assert ended[0]["metrics"]["steps_completed"] == 9

    def test_zero_lag_no_false_errors(self, models, smoke_checklist):
        from neuroguide.gateway import HumanSession

        pushes = []
        cfg = SessionConfig(condition="baseline", seed=3, checklist=smoke_checklist,
                            late_prob=0.0)
        session = HumanSession(cfg, pushes.append, models=models, realtime=False)
        import io
        from neuroguide.bus import BagWriter, STANDARD_TOPICS
        session._sink = io.BytesIO()
        session._writer = BagWriter(session._sink, cfg.session_id, 0, STANDARD_TOPICS)
        session.bus.attach_recorder(session._writer)
        for _ in range(2000):
            if session.engine.tree.complete:
                break
            active = session.engine.tree.active_step
            if (active is not None
                    and session._tick * 1e8 >= session._task_start_ns
                    and session._tick % 20 == 0):
                session.submit_action(active.target_control, active.expected_value)
            session._step_once()
        session._finish()
        ended = [p for p in pushes if p["type"] == "session_ended"][0]
        assert ended["metrics"]["false_error_count"] == 0

    def test_guidance_pushed_once_per_decision(self, models, smoke_checklist):
        from neuroguide.gateway import HumanSession

        pushes = []
        cfg = SessionConfig(condition="adaptive", seed=4, checklist=smoke_checklist)
        session = HumanSession(cfg, pushes.append, models=models, realtime=False)
        import io
        from neuroguide.bus import BagWriter, STANDARD_TOPICS
        session._sink = io.BytesIO()
        session._writer = BagWriter(session._sink, cfg.session_id, 0, STANDARD_TOPICS)
        session.bus.attach_recorder(session._writer)
        # act slowly (every 15 s) so the 10 s cadence fires between actions
        for _ in range(3000):
            if session.engine.tree.complete:
                break
            active = session.engine.tree.active_step
            if (active is not None
                    and session._tick * 1e8 >= session._task_start_ns
                    and session._tick % 150 == 149):
                session.submit_action(active.target_control, active.expected_value)
            session._step_once()
        session._finish()
        guidance_pushes = [p for p in pushes if p["type"] == "guidance"]
        assert len(guidance_pushes) == len(session._policy.decisions)
        assert len(guidance_pushes) > 0
