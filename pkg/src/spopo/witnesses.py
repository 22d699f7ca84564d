"""Entanglement witnesses for block-diagonal Gaussian states.

Bipartitions are encoded as bit masks over band indices. The canonical
representative of a split always contains band 0, so n bands give
2**(n-1) - 1 distinct bipartitions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateStateError, InvalidStateError
from .state import CovarianceState

ENTANGLEMENT_EPS = 1e-9
MAX_SCAN_BANDS = 20


@dataclass(frozen=True)
class Bipartition:
    mask: int
    n: int

    def __post_init__(self):
        full = (1 << self.n) - 1
        if self.mask <= 0 or self.mask >= full or self.mask & ~full:
            raise ConfigurationError(f"mask {self.mask:#x} is not a proper nonempty subset of {self.n} bands")

    @classmethod
    def from_subset(cls, subset, n: int) -> "Bipartition":
        mask = 0
        for i in subset:
            mask |= 1 << int(i)
        return cls(mask, n)

    @property
    def subset(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n) if self.mask >> i & 1)

    @property
    def complement(self) -> "Bipartition":
        return Bipartition(((1 << self.n) - 1) ^ self.mask, self.n)

    def canonical(self) -> "Bipartition":
        return self if self.mask & 1 else self.complement

    def indicator(self) -> np.ndarray:
        return np.array([self.mask >> i & 1 for i in range(self.n)], dtype=bool)

    def is_reflection_symmetric(self) -> bool:
        ind = self.indicator()
        return bool(np.array_equal(ind, ind[::-1]))


def canonical_bipartitions(n: int) -> list[Bipartition]:
    if n < 2:
        raise ConfigurationError("need at least two bands to form a bipartition")
    return [Bipartition(m, n) for m in range(1, 1 << n, 2) if m != (1 << n) - 1]


def _collective_weights(part: Bipartition, weights) -> tuple[np.ndarray, np.ndarray]:
    w = np.ones(part.n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (part.n,) or np.any(w <= 0):
        raise ConfigurationError("band weights must be positive, one per band")
    ind = part.indicator()
    wa = np.where(ind, w, 0.0)
    wb = np.where(ind, 0.0, w)
    return wa / np.linalg.norm(wa), wb / np.linalg.norm(wb)


def duan(state: CovarianceState, part: Bipartition, weights=None) -> float:
    """Var((x_A + x_B)/sqrt 2) + Var((p_A - p_B)/sqrt 2); vacuum gives 2."""
    wa, wb = _collective_weights(part, weights)
    u = (wa + wb) / np.sqrt(2)
    v = (wa - wb) / np.sqrt(2)
    return float(u @ state.cx @ u + v @ state.cp @ v)


def conditional_variances(state: CovarianceState, part: Bipartition, weights=None) -> tuple[float, float]:
    wa, wb = _collective_weights(part, weights)
    out = []
    for c in (state.cx, state.cp):
        var_a, var_b, cov = wa @ c @ wa, wb @ c @ wb, wa @ c @ wb
        if var_b <= 0:
            raise DegenerateStateError("collective variance of the conditioning side is not positive")
        out.append(float(var_a - cov**2 / var_b))
    return out[0], out[1]


def epr_product(state: CovarianceState, part: Bipartition, weights=None) -> float:
    """Product of the optimal-linear-estimate conditional variances of A given B."""
    dx, dp = conditional_variances(state, part, weights)
    return dx * dp


def _ppt_min_batch(cx: np.ndarray, cp: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Smallest partially transposed symplectic eigenvalue.

    ``cx``/``cp`` are (..., n, n); ``signs`` is (m, n) with -1 on the
    transposed side. Returns (..., m).
    """
    wx, ux = np.linalg.eigh(cx)
    if np.any(wx <= 0):
        raise InvalidStateError("Cx is not positive definite")
    root = (ux * np.sqrt(wx)[..., None, :]) @ np.swapaxes(ux, -1, -2)
    flipped = cp[..., None, :, :] * signs[:, :, None] * signs[:, None, :]
    r = root[..., None, :, :]
    m = r @ flipped @ r
    w = np.linalg.eigvalsh(m)
    if np.any(w[..., 0] <= 0):
        raise InvalidStateError("Cp is not positive definite")
    return np.sqrt(w[..., 0])


def ppt_min_symplectic(state: CovarianceState, part: Bipartition) -> float:
    """min nu of the state after flipping the sign of p on subset A."""
    signs = np.where(part.indicator(), -1.0, 1.0)[None, :]
    return float(_ppt_min_batch(state.cx, state.cp, signs)[0])


def purity(state: CovarianceState) -> float:
    dx, dp = np.linalg.det(state.cx), np.linalg.det(state.cp)
    if dx <= 0 or dp <= 0:
        raise InvalidStateError("covariance blocks must have positive determinant")
    return float(1 / np.sqrt(dx * dp))


@dataclass(frozen=True)
class WitnessReport:
    part: Bipartition
    duan_value: float
    epr_product: float
    ppt_min_nu: float
    eps: float = ENTANGLEMENT_EPS

    @property
    def entangled_ppt(self) -> bool:
        return self.ppt_min_nu < 1 - self.eps

    @property
    def entangled_epr(self) -> bool:
        return self.epr_product < 1 - self.eps

    @property
    def duan_violated(self) -> bool:
        return self.duan_value < 2 - self.eps

    def to_dict(self) -> dict:
        return {
            "partition_mask": self.part.mask,
            "subset": list(self.part.subset),
            "duan": self.duan_value,
            "epr": self.epr_product,
            "ppt_nu_min": self.ppt_min_nu,
            "flags": {
                "entangled_ppt": self.entangled_ppt,
                "entangled_epr": self.entangled_epr,
                "duan_violated": self.duan_violated,
            },
        }


@dataclass(frozen=True)
class ScanResult:
    reports: tuple[WitnessReport, ...]

    def __len__(self):
        return len(self.reports)

    def __iter__(self):
        return iter(self.reports)

    def __getitem__(self, i):
        return self.reports[i]

    @property
    def ppt_entangled(self) -> int:
        return sum(r.entangled_ppt for r in self.reports)

    @property
    def epr_entangled(self) -> int:
        return sum(r.entangled_epr for r in self.reports)

    @property
    def duan_violated(self) -> int:
        return sum(r.duan_violated for r in self.reports)

    def counts(self) -> dict:
        return {
            "bipartitions": len(self),
            "ppt_entangled": self.ppt_entangled,
            "epr_entangled": self.epr_entangled,
            "duan_violated": self.duan_violated,
        }

    def by_mask(self) -> dict[int, WitnessReport]:
        return {r.part.mask: r for r in self.reports}

    def to_json(self, path) -> None:
        payload = [r.to_dict() for r in self.reports]
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    def to_csv(self, path) -> None:
        lines = ["rank,partition_mask,duan,epr,ppt_nu_min,entangled_ppt,entangled_epr"]
        for rank, r in enumerate(self.reports):
            lines.append(
                f"{rank},{r.part.mask},{r.duan_value:.12g},{r.epr_product:.12g},{r.ppt_min_nu:.12g},"
                f"{int(r.entangled_ppt)},{int(r.entangled_epr)}"
            )
        Path(path).write_text("\n".join(lines) + "\n")


def scan_bipartitions(state: CovarianceState, eps: float = ENTANGLEMENT_EPS) -> ScanResult:
    """Evaluate every canonical bipartition; results sorted by EPR product.

    Ties are broken by mask so the order never depends on evaluation order.
    """
    n = state.n_bands
    if n > MAX_SCAN_BANDS:
        raise ConfigurationError(f"refusing to scan 2**{n - 1} bipartitions (limit is {MAX_SCAN_BANDS} bands)")
    parts = canonical_bipartitions(n)
    signs = np.array([np.where(p.indicator(), -1.0, 1.0) for p in parts])
    nus = _ppt_min_batch(state.cx, state.cp, signs)
    reports = [
        WitnessReport(p, duan(state, p), epr_product(state, p), float(nu), eps)
        for p, nu in zip(parts, nus)
    ]
    reports.sort(key=lambda r: (r.epr_product, r.part.mask))
    return ScanResult(tuple(reports))


def ppt_quantiles(cx: np.ndarray, cp: np.ndarray, parts, q: float = 0.95) -> np.ndarray:
    """Per-bipartition ``q``-quantile of min nu over a stack of sampled states."""
    signs = np.array([np.where(p.indicator(), -1.0, 1.0) for p in parts])
    nus = _ppt_min_batch(cx, cp, signs)
    return np.quantile(nus, q, axis=0)
