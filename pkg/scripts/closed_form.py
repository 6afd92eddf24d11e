#!/usr/bin/env python3
"""Reproduce the reference closed-form quantities from their stated inputs.

No data are needed: every number follows from rounded reference parameters.
"""
from evtss import GevParams, empirical_collision_probability
from evtss.bivar import jf_kendall_tau, joint_collision_probability, tail_dependence
from evtss.fit_uni import lr_from_statistic
from evtss.prob import bm_collision_probability


def main() -> None:
    rows = []
    rows.append(("rear-end stationary Gumbel(-1.456, 0.256)",
                 f"{bm_collision_probability(GevParams(-1.456, 0.256, 0.0)):.5f}", "0.00334"))
    rows.append(("joint probability, r = 0.865",
                 f"{joint_collision_probability(0.99065, 0.99368, 0.865).p:.4f}", "0.0141"))
    for r, pub in ((0.865, "0.1783"), (0.903, "0.1302")):
        rows.append((f"tail dependence, r = {r}", f"{tail_dependence(r):.4f}", pub))
    for k, n, pub in ((9, 463, "0.0191 (0.0067, 0.0314)"), (2, 492, "0.00405 (-0.00155, 0.00964)")):
        e = empirical_collision_probability(k, n)
        digits = 4 if k == 9 else 5
        rows.append((f"empirical {k}/({n}+{k})", f"{e.p:.{digits}f} ({e.ci[0]:.{digits}f}, {e.ci[1]:.{digits}f})", pub))
    for stat, df, pub in ((5.189, 1, "0.023"), (17.508, 2, "0.0002")):
        rows.append((f"LR p-value, {stat} on {df} df", f"{lr_from_statistic(stat, df).p_value:.4f}", pub))
    rows.append(("Joe-Frank(1.631, 0.929) implied tau", f"{jf_kendall_tau(1.631, 0.929):.4f}", "0.184"))

    w = max(len(r[0]) for r in rows)
    print(f"{'quantity':<{w}}  {'computed':<28}  reference")
    for name, got, pub in rows:
        print(f"{name:<{w}}  {got:<28}  {pub}")


if __name__ == "__main__":
    main()
