"""The scripted expert in closed loop across all four gaits: survival,
velocity tracking and the contact patterns that define each gait.

Run:  python3 demos/03_expert_gaits.py
"""

import numpy as np

from quadgait import ContactParams, RobotModel
from quadgait.dataset import inverse_pd_target
from quadgait.evaluation import closed_loop_rollout
from quadgait.expert import ExpertGains, expert_torques
from quadgait.gait import GAIT_NAMES, VelocityCommand, gait_phase, make_gait
from quadgait.simulation import contact_flags, nominal_stance_state, step

model = RobotModel()
contact = ContactParams()
gains = ExpertGains()

print("-- gait definitions --")
for name in GAIT_NAMES:
    spec = make_gait(name)
    print(f"{name:6s} period {spec.period:.2f} s, duty {spec.duty:.2f}, "
          f"offsets {spec.phase_offset}, swing height {spec.swing_height} m")

print("\n-- closed-loop tracking (3 s each, velocity error after the 1 s transient) --")
for name in GAIT_NAMES:
    for vx in (0.0, 0.3):
        _, summary = closed_loop_rollout(
            model, contact, make_gait(name), VelocityCommand(vx, 0.0, 0.0), 3.0,
            net=None, expert_gains=gains,
        )
        print(f"{name:6s} vx={vx:+.1f}: survived={summary.survived} "
              f"vx_err={summary.mean_vx_error:.3f} m/s  mean height={summary.mean_height:.3f} m")

print("\n-- trot contact sequence over one period (x = loaded foot) --")
spec = make_gait("trot")
state = nominal_stance_state(model, contact=contact)
cmd = VelocityCommand(0.2, 0.0, 0.0)
while state.time < 2.0:  # let the gait settle
    act = expert_torques(state, model, spec, cmd, state.time, gains, contact.mu)
    state = step(state, model, contact,
                 inverse_pd_target(act.tau_raw, state.q, state.v, model.kp, model.kd), 1e-3)
print("phase | FL FR RL RR (sim contact)   | commanded stance")
for k in range(10):
    t_target = 2.0 + k * spec.period / 10
    while state.time < t_target:
        act = expert_torques(state, model, spec, cmd, state.time, gains, contact.mu)
        state = step(state, model, contact,
                     inverse_pd_target(act.tau_raw, state.q, state.v, model.kp, model.kd), 1e-3)
    flags = contact_flags(state, contact)
    _, stance = gait_phase(spec, state.time)
    row = "  ".join("x" if f else "." for f in flags)
    cmd_row = "  ".join("x" if s else "." for s in stance)
    print(f" {k/10:.1f}  |  {row}                |  {cmd_row}")
