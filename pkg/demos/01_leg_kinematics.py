"""Tour of the leg kinematics: forward kinematics, the analytic inverse,
and the Jacobian, with a finite-difference cross-check.

Run:  python3 demos/01_leg_kinematics.py
"""

import numpy as np

from quadgait import RobotModel, LegIndex
from quadgait.robot import leg_forward_kinematics, leg_inverse_kinematics, leg_jacobian

model = RobotModel()
print("Go1-like model: l_thigh =", model.l_thigh, "m, l_calf =", model.l_calf,
      "m, abduction offset =", model.l_abd, "m")

print("\n-- forward kinematics --")
zero = np.zeros(3)
print("FL foot at zero config:", leg_forward_kinematics(model, LegIndex.FL, zero).round(4))
print("  (straight below the abduction pivot at depth l_thigh + l_calf)")
nominal = model.nominal_joint_pos[:3]
print("FL foot at nominal stance:", leg_forward_kinematics(model, LegIndex.FL, nominal).round(4))
print("  (z equals -nominal_base_height =", -model.nominal_base_height, ")")

print("\n-- inverse kinematics round trip --")
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(1000):
    q = np.array([rng.uniform(-0.6, 0.6), rng.uniform(0.2, 1.2), rng.uniform(-2.2, -0.9)])
    p = leg_forward_kinematics(model, LegIndex.RL, q)
    q_back = leg_inverse_kinematics(model, LegIndex.RL, p)
    worst = max(worst, float(np.max(np.abs(q - q_back))))
print(f"worst |IK(FK(q)) - q| over 1000 random configs: {worst:.2e} rad")

print("\n-- Jacobian vs finite differences --")
q = np.array([0.2, 0.7, -1.4])
J = leg_jacobian(model, LegIndex.FR, q)
h = 1e-6
J_fd = np.empty((3, 3))
for j in range(3):
    dq = np.zeros(3)
    dq[j] = h
    J_fd[:, j] = (
        leg_forward_kinematics(model, LegIndex.FR, q + dq)
        - leg_forward_kinematics(model, LegIndex.FR, q - dq)
    ) / (2 * h)
print("analytic:\n", J.round(5))
print("max abs difference vs central differences:", f"{np.max(np.abs(J - J_fd)):.2e}")

print("\n-- workspace boundary --")
target = model.hip_offsets[0] + [0.0, model.l_abd, -(model.max_leg_radius + 0.02)]
try:
    leg_inverse_kinematics(model, LegIndex.FL, target)
except Exception as exc:
    print("IK on an out-of-reach target raises:", type(exc).__name__, "-", exc)
q_clamped = leg_inverse_kinematics(model, LegIndex.FL, target, clamp=True)
print("clamped solution folds back to the boundary:", q_clamped.round(4))
