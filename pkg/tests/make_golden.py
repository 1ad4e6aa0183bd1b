"""Regenerate the golden files in tests/golden.

Run from the repository root with ``python tests/make_golden.py``. The
oracle values come from tests/oracles.py (no viscolab imports); the batch
and ladder goldens are the runs themselves, frozen so later changes that
shift them are caught.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import benchmarks as B  # noqa: E402
import oracles  # noqa: E402

GOLDEN = HERE / "golden"


def _write(name: str, data: dict) -> None:
    GOLDEN.mkdir(exist_ok=True)
    path = GOLDEN / name
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path}")


def oracle_values() -> dict:
    r = np.linspace(0.0, 1.0, 11)
    x = np.linspace(-1.0, 1.0, 2049)
    fits = {}
    for k in range(6):
        rk = 0.25**k
        sel = np.abs(x) <= rk + 1e-12
        fits[str(k)] = oracles.minimax_line_1d(x[sel], np.abs(x[sel]) ** 1.5)[2]
    return {
        "j0_squared": oracles.bessel_first_eig(1.0),
        "tridiag_h256_lam1": oracles.dirichlet_laplacian_eig(1 / 256, 1.0),
        "tridiag_h256_lam2": oracles.dirichlet_laplacian_eig(1 / 256, 2.0),
        "radial_pucci_1_2_f-1": {"r": r.tolist(), "u": oracles.radial_pucci_profile(1.0, 2.0, -1.0, r).tolist()},
        "abs15_minimax_E_h1024": fits,
    }


def abp_cap() -> dict:
    from viscolab.analysis import abp_batch

    out = abp_batch(B.ABP_INSTANCES, seed=B.ABP_SEED, n=2)
    return {k: out[k] for k in ("n_instances", "seed", "n", "p", "batch_max_ratio", "cap", "factor", "violations",
                                "ratios_max", "ratios_min")}


def approximation() -> dict:
    from viscolab import Domain
    from viscolab.analysis import approximation_ladder

    out = {}
    for name, dom in (("disc", Domain.disc()), ("half_disc", Domain.half_disc(0.5, 1.0, (0.0, 0.0)))):
        lad = approximation_ladder(B.APPROX_DELTAS, dom, B.APPROX_H)
        out[name] = {"deltas": list(B.APPROX_DELTAS), "h": B.APPROX_H, "gaps": lad["gaps"]}
    return out


def nagumo() -> dict:
    from viscolab.analysis import nagumo_ladder

    out = {}
    for name, mk in (("smooth", B.nagumo_smooth), ("singular_b", B.nagumo_singular)):
        rep = nagumo_ladder(mk, B.NAGUMO_HS, B.NAGUMO_P)
        out[name] = {"hs": list(B.NAGUMO_HS), "p": B.NAGUMO_P, "ratios": rep.data["ratios"]}
    return out


def simplicity() -> dict:
    from viscolab import Domain, EigenConfig, ExtremalOperator, simplicity_check

    out = {}
    cases = (
        ("interval_laplacian", ExtremalOperator(1, 1.0, 1.0, dim=1), Domain.interval(), 1 / 128),
        ("disc_pucci", ExtremalOperator(1, 1.0, 2.0, dim=2), Domain.disc(), 1 / 32),
    )
    for name, F, dom, h in cases:
        rep = simplicity_check(F, 1.0, dom, cfg=EigenConfig(h=h))
        out[name] = {"h": h, "alphas": rep.data["alphas"], "max_field_distance": rep.data["max_field_distance"]}
    return out


def main() -> None:
    _write("oracles.json", oracle_values())
    _write("abp_cap.json", abp_cap())
    _write("approximation_ladder.json", approximation())
    _write("nagumo_ladder.json", nagumo())
    _write("simplicity.json", simplicity())


if __name__ == "__main__":
    main()
