"""Drive the checklist engine by hand: completions, a wrong-control error, the
error dashboard, and the 10 s / 20 s timing triggers on the logical clock."""

from neuroguide import data
from neuroguide.tasks import ChecklistSpec, TaskEngine, WorldState

S = 1_000_000_000
spec = ChecklistSpec.from_dict(data.load_fixture_checklist("uh60_preflight"))
engine = TaskEngine(spec, condition="adaptive", session_start_ns=0)
params = spec.initial_parameters()
last_action = None


def act(t_s, control, value):
    global last_action
    params[control] = value
    last_action = {"control_id": control, "value": value, "timestamp_ns": int(t_s * S)}
    return engine.apply_world_state(
        WorldState(int(t_s * S), dict(params), None, last_action)
    )


def clock(t_s):
    return engine.check_clock(int(t_s * S))


def show(events):
    for ev in events:
        extra = ""
        if ev.kind == "error_detected":
            extra = f" (expected {ev.detail['expected_control']}, got {ev.detail['actual_control']})"
        if "due_ns" in ev.detail:
            extra = f" (due exactly at {ev.detail['due_ns'] / S:.1f} s)"
        print(f"  {ev.timestamp_ns / S:6.1f} s  {ev.kind:<18} {ev.step_id}{extra}")


print(f"checklist: {len(spec.procedures)} procedures, {len(spec.steps)} steps")
print(f"active: {engine.tree.active_step_id}\n")

print("correct action on P1.S1 at t=5:")
show(act(5, "battery_switch", "ON"))

print("\nwrong control (a future step's switch) at t=8:")
show(act(8, "apu_control_switch", "ON"))
view = engine.error_dashboard_state()
print(f"  dashboard: expected {view['expected_step_id']} -> "
      f"{view['corrective_instruction']!r}, audible alert={view['alert']}")

print("\ncorrective action at t=12:")
show(act(12, "ext_power_switch", "OFF"))

print("\nclock sweep (no further actions): guidance due at +10 s, timeout at +20 s")
for t in range(13, 36):
    show(clock(t))
