"""Empirical constant of the local-mass L^q bound on a spreading family.

Run: python demos/local_mass_inequality.py
Every u_n has the same W^{1,2} norm; the largest unit-ball mass and the
L^4 norm both fall as the copies spread, with the ratio pinned.
"""
from ccdecomp.sobolev import lemma41_ratio
from ccdecomp.synth import gen_spreading_sobolev


def main():
    us, _ = gen_spreading_sobolev(24, (128, 128), 0.1, 2.0)
    print("    n    |u|_W12   local mass   |u|_L4     ratio")
    for n, u in enumerate(us, start=1):
        r = lemma41_ratio(u, 2, 4)
        if n in (1, 2, 4, 8, 12, 16, 20, 24):
            print(f"  {n:3d}  {r.w1p:8.5f}  {r.local_mass:10.5f}  {r.lq:8.5f}  {r.ratio:8.5f}")


if __name__ == "__main__":
    main()
