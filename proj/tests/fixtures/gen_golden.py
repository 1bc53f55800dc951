#!/usr/bin/env python3
"""Regenerates the golden trajectory fixtures.

Stand-alone reference implementation of the classic-control dynamics in plain
Python floats (no numpy, no shared code with the C++ sources). Each fixture
starts from a fixed internal state and applies a fixed action sequence.

Usage: python3 gen_golden.py [output_dir]
"""

import math
import os
import sys

STEPS = 20


def acrobot_step(s, a):
    m1 = m2 = 1.0
    l1 = 1.0
    lc1 = lc2 = 0.5
    i1 = i2 = 1.0
    g = 9.8
    dt = 0.2
    torque = [-1.0, 0.0, 1.0][a]

    def dsdt(y):
        theta1, theta2, dtheta1, dtheta2 = y
        d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
        d2 = m2 * (lc2 ** 2 + l1 * lc2 * math.cos(theta2)) + i2
        phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
        phi1 = (-m2 * l1 * dtheta2 ** 2 * math.sin(theta2)
                - 2 * m2 * l1 * dtheta2 * dtheta1 * math.sin(theta2)
                + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2) + phi2)
        ddtheta2 = ((torque + d2 / d1 * phi1 - m2 * l1 * dtheta1 ** 2 * math.sin(theta2) - phi2)
                    / (m2 * lc2 ** 2 + i2 - d2 ** 2 / d1))
        ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
        return [dtheta1, dtheta2, ddtheta1, ddtheta2]

    def axpy(y, h, k):
        return [yi + h * ki for yi, ki in zip(y, k)]

    k1 = dsdt(s)
    k2 = dsdt(axpy(s, dt / 2, k1))
    k3 = dsdt(axpy(s, dt / 2, k2))
    k4 = dsdt(axpy(s, dt, k3))
    ns = [s[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(4)]

    def wrap(x, lo, hi):
        span = hi - lo
        while x > hi:
            x -= span
        while x < lo:
            x += span
        return x

    ns[0] = wrap(ns[0], -math.pi, math.pi)
    ns[1] = wrap(ns[1], -math.pi, math.pi)
    ns[2] = min(max(ns[2], -4 * math.pi), 4 * math.pi)
    ns[3] = min(max(ns[3], -9 * math.pi), 9 * math.pi)
    terminated = -math.cos(ns[0]) - math.cos(ns[1] + ns[0]) > 1.0
    return ns, (0.0 if terminated else -1.0), terminated


def mountaincar_step(s, a):
    force, gravity = 0.001, 0.0025
    position, velocity = s
    velocity += (a - 1) * force + math.cos(3 * position) * (-gravity)
    velocity = min(max(velocity, -0.07), 0.07)
    position += velocity
    position = min(max(position, -1.2), 0.6)
    if position == -1.2 and velocity < 0:
        velocity = 0.0
    terminated = position >= 0.5 and velocity >= 0
    return [position, velocity], -1.0, terminated


def cartpole_step(s, a):
    gravity, masscart, masspole, length, force_mag, tau = 9.8, 1.0, 0.1, 0.5, 10.0, 0.02
    total_mass = masspole + masscart
    polemass_length = masspole * length
    x, x_dot, theta, theta_dot = s
    force = force_mag if a == 1 else -force_mag
    costheta, sintheta = math.cos(theta), math.sin(theta)
    temp = (force + polemass_length * theta_dot ** 2 * sintheta) / total_mass
    thetaacc = (gravity * sintheta - costheta * temp) / (
        length * (4.0 / 3.0 - masspole * costheta ** 2 / total_mass))
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    x = x + tau * x_dot
    x_dot = x_dot + tau * xacc
    theta = theta + tau * theta_dot
    theta_dot = theta_dot + tau * thetaacc
    limit = 12 * 2 * math.pi / 360
    terminated = x < -2.4 or x > 2.4 or theta < -limit or theta > limit
    return [x, x_dot, theta, theta_dot], 1.0, terminated


CASES = {
    "acrobot": (acrobot_step, [0.05, -0.03, 0.02, -0.01], 3),
    "mountaincar": (mountaincar_step, [-0.5, 0.0], 3),
    "cartpole": (cartpole_step, [0.01, -0.02, 0.03, 0.015], 2),
}


def actions(n_actions):
    # Deterministic, non-trivial action pattern.
    return [(3 * k + k // 4) % n_actions for k in range(STEPS)]


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))
    for name, (step, s0, n_actions) in CASES.items():
        lines = [f"# env {name}",
                 "# initial " + " ".join(repr(v) for v in s0),
                 "# columns: step action state... reward done"]
        s = list(s0)
        for k, a in enumerate(actions(n_actions)):
            s, r, done = step(s, a)
            lines.append(" ".join([str(k + 1), str(a)] + [repr(v) for v in s] + [repr(r), str(int(done))]))
            if done:
                break
        with open(os.path.join(out_dir, f"golden_{name}.txt"), "w") as f:
            f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
