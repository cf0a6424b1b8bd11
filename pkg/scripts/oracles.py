"""Independent high-precision reference values (mpmath only, no skewflow imports).

The printed numbers are frozen into the test suite.
"""

import mpmath as mp

mp.mp.dps = 30


def fbm_cov(h, t, s):
    h, t, s = mp.mpf(h), mp.mpf(t), mp.mpf(s)
    return (t ** (2 * h) + s ** (2 * h) - abs(t - s) ** (2 * h)) / 2


def kh_kernel(h, t, s):
    h, t, s = mp.mpf(h), mp.mpf(t), mp.mpf(s)
    c = mp.sqrt(2 * h / ((1 - 2 * h) * mp.beta(1 - 2 * h, h + mp.mpf(1) / 2)))
    inner = mp.quad(lambda u: u ** (h - mp.mpf(3) / 2) * (u - s) ** (h - mp.mpf(1) / 2), [s, (s + t) / 2, t])
    return c * ((t / s) ** (h - 0.5) * (t - s) ** (h - 0.5) - (h - 0.5) * s ** (0.5 - h) * inner)


def bump_odd_d1(y, c, w):
    z = (y - c) / w
    return (1 - z * z) * mp.exp(-z * z / 2) / w


def gauss_mean(g, sigma):
    return mp.quad(lambda y: g(y) * mp.npdf(y, 0, sigma), [-mp.inf, 0, mp.inf])


def main():
    out = {}
    out["gamma(1.25)"] = mp.gamma(mp.mpf("1.25"))
    out["beta(0.3,0.45)"] = mp.beta(mp.mpf("0.3"), mp.mpf("0.45"))
    for h in ("0.1", "0.3"):
        out[f"K_H(h={h}, t=1, s=0.4)"] = kh_kernel(h, 1, mp.mpf("0.4"))
        out[f"R_H(h={h}, 2, 1)"] = fbm_cov(h, 2, 1)
    out["E int_0^1 phi_eps(W) ds, eps=2^-6"] = mp.sqrt(2 / mp.pi) * (mp.sqrt(1 + mp.mpf(2) ** -6) - mp.sqrt(mp.mpf(2) ** -6))
    # E int_0^1 Df(B^H_s) ds for the odd bump, center 0.3, width 0.5, h = 0.3
    h = mp.mpf("0.3")
    out["odd bump simplex mean"] = mp.quad(
        lambda s: gauss_mean(lambda y: bump_odd_d1(y, mp.mpf("0.3"), mp.mpf("0.5")), s**h), [0, 1])
    out["1/sqrt(Gamma(1.8))"] = 1 / mp.sqrt(mp.gamma(mp.mpf("1.8")))
    # series term h=0.1, d=1, k=1, q=1, m=3: G = 8.4, N = 6
    out["series term (0.1,1,1,1,3)"] = (mp.factorial(12) ** mp.mpf(0.25) / mp.sqrt(mp.gamma(mp.mpf("8.4")))) ** 0.5
    # simplex integrals over 0 < s_2 < s_1 < 1
    out["int_simplex2 s1*s2"] = mp.quad(lambda s1: s1 * mp.quad(lambda s2: s2, [0, s1]), [0, 1])
    out["int_simplex3 cos(s1) s2 exp(s3)"] = mp.quad(
        lambda s1: mp.cos(s1) * mp.quad(lambda s2: s2 * mp.quad(lambda s3: mp.exp(s3), [0, s2]), [0, s1]), [0, 1])
    for k, v in out.items():
        print(f"{k:40s} {mp.nstr(v, 17)}")


if __name__ == "__main__":
    main()
