"""MOS small-signal records, square-law bias relations and Pelgrom mismatch."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

NMOS = "nmos"
PMOS = "pmos"


class CutoffError(ValueError):
    """A mismatch sample pushed a device out of saturation."""


@dataclass(frozen=True)
class MosSmallSignal:
    """Small-signal parameters of one transistor at its bias point.

    Units are SI except geometry, which is in micrometres. ``vov`` may be
    ``None`` for devices whose overdrive is unknown (tail sources); such
    devices cannot be perturbed by :func:`apply_mismatch`.
    """

    name: str
    polarity: str
    gm: float
    gmb: float
    ro: float
    W: float
    L: float
    Cgs: float = 0.0
    Cgd: float = 0.0
    Cdb: float = 0.0
    Id: float = 0.0
    vov: float | None = None

    def __post_init__(self):
        if self.polarity not in (NMOS, PMOS):
            raise ValueError(f"{self.name}: polarity must be nmos or pmos")
        if self.gm < 0 or self.gmb < 0:
            raise ValueError(f"{self.name}: gm and gmb must be >= 0")
        if not self.ro > 0:
            raise ValueError(f"{self.name}: ro must be > 0")
        if not self.W * self.L > 0 or self.W < 0:
            raise ValueError(f"{self.name}: W and L must be > 0")
        if min(self.Cgs, self.Cgd, self.Cdb) < 0:
            raise ValueError(f"{self.name}: capacitances must be >= 0")

    @classmethod
    def from_bias(cls, name, polarity, Id, vov, ro, W, L, gmb=0.0, **caps):
        """Square-law consistent record with ``gm = 2 Id / vov``."""
        return cls(name, polarity, 2.0 * Id / vov, gmb, ro, W, L, Id=Id, vov=vov, **caps)

    @property
    def gds(self) -> float:
        return 1.0 / self.ro

    @property
    def beta(self) -> float:
        """Current factor ``2 Id / vov**2`` (A/V^2)."""
        if not self.vov:
            raise ValueError(f"{self.name}: overdrive unknown")
        return 2.0 * self.Id / self.vov**2


@dataclass(frozen=True)
class PelgromParams:
    """Area-scaling coefficients. A_vt in mV*um, A_beta in %*um."""

    avt_nmos: float = 6.0
    avt_pmos: float = 6.6
    abeta_nmos: float = 1.04
    abeta_pmos: float = 0.99

    def __post_init__(self):
        if min(self.avt_nmos, self.avt_pmos, self.abeta_nmos, self.abeta_pmos) < 0:
            raise ValueError("Pelgrom coefficients must be >= 0")

    def scaled(self, k: float) -> "PelgromParams":
        return PelgromParams(self.avt_nmos * k, self.avt_pmos * k,
                             self.abeta_nmos * k, self.abeta_pmos * k)

    def for_polarity(self, polarity: str) -> tuple[float, float]:
        if polarity == NMOS:
            return self.avt_nmos, self.abeta_nmos
        return self.avt_pmos, self.abeta_pmos


@dataclass(frozen=True)
class MismatchDelta:
    device: str
    dVt: float
    dBetaRel: float


@dataclass(frozen=True)
class DrainCurrent:
    current: float
    cutoff: bool


def square_law_id(beta: float, vgs: float, vt: float) -> DrainCurrent:
    """Saturation drain current ``beta/2 * (vgs - vt)**2``; zero and flagged in cutoff."""
    vov = vgs - vt
    if vov <= 0:
        return DrainCurrent(0.0, True)
    return DrainCurrent(0.5 * beta * vov * vov, False)


def pelgrom_sigma(A: float, W: float, L: float) -> float:
    """Standard deviation ``A / sqrt(W L)``, in the units of ``A`` per um."""
    if not (W > 0 and L > 0):
        raise ValueError(f"geometry must be positive, got W={W!r}, L={L!r}")
    return A / math.sqrt(W * L)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_delta(rng: np.random.Generator, device: MosSmallSignal, params: PelgromParams,
               scale: float = 1.0) -> MismatchDelta:
    avt, abeta = params.for_polarity(device.polarity)
    s_vt = pelgrom_sigma(avt, device.W, device.L) * 1e-3 * scale
    s_beta = pelgrom_sigma(abeta, device.W, device.L) * 1e-2 * scale
    # always draw both so the stream position does not depend on the values
    dvt, dbeta = rng.normal(0.0, 1.0, 2)
    return MismatchDelta(device.name, float(dvt * s_vt), float(dbeta * s_beta))


def sample_mismatch(seed, devices: Sequence[MosSmallSignal], params: PelgromParams,
                    scale: float = 1.0) -> list[MismatchDelta]:
    """One independent ``(dVt, dBeta/beta)`` per device.

    ``seed`` may be anything :func:`numpy.random.default_rng` accepts or a
    Generator. ``scale`` multiplies every sigma.
    """
    rng = _rng(seed)
    return [draw_delta(rng, d, params, scale) for d in devices]


def apply_mismatch(device: MosSmallSignal, delta: MismatchDelta) -> MosSmallSignal:
    """Perturb ``device`` at fixed gate-source voltage.

    The current scales by ``(1 + dBetaRel) * ((vov - dVt) / vov)**2`` and gm by
    ``(1 + dBetaRel) * (vov - dVt) / vov``. Output conductance tracks the
    current (lambda fixed); gmb tracks gm; capacitances are unchanged.
    """
    if delta.dVt == 0.0 and delta.dBetaRel == 0.0:
        return device
    if not device.vov:
        raise ValueError(f"{device.name}: overdrive unknown, cannot apply mismatch")
    vov_new = device.vov - delta.dVt
    if vov_new <= 0:
        raise CutoffError(f"{device.name}: dVt={delta.dVt:g} V >= Vov={device.vov:g} V")
    k_beta = 1.0 + delta.dBetaRel
    if k_beta <= 0:
        raise CutoffError(f"{device.name}: beta factor {k_beta:g} <= 0")
    ratio_v = vov_new / device.vov
    k_id = k_beta * ratio_v * ratio_v
    k_gm = k_beta * ratio_v
    return replace(device, gm=device.gm * k_gm, gmb=device.gmb * k_gm,
                   ro=device.ro / k_id, Id=device.Id * k_id, vov=vov_new)
