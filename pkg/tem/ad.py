"""
Foroverderivering med duale tall.

Dual bærer en verdi-array og en tangent-array med én ekstra akse bakerst
(antall retningsderiverte). Alle modellfunksjoner skrives én gang og kan
evalueres på float, numpy-arrays eller Dual; hjelpefunksjonene under velger
riktig variant.

Eksempel:
    >>> x = seed(np.array([1.0, 2.0]))
    >>> y = x[0] * x[1]
    >>> y.tangent
    array([2., 1.])
"""

from typing import Sequence, Union

import numpy as np


Number = Union[float, np.ndarray, "Dual"]


class Dual:
    """Verdi pluss tangenter, vektorisert over vilkårlige ledende akser."""

    __slots__ = ("value", "tangent")
    # numpy-operatorer skal gi fra seg kontrollen til Dual sine r-metoder
    __array_ufunc__ = None

    def __init__(self, value, tangent):
        self.value = np.asarray(value, dtype=float)
        tangent = np.asarray(tangent, dtype=float)
        shape = self.value.shape + tangent.shape[-1:]
        if tangent.shape != shape:
            tangent = np.broadcast_to(tangent, shape)
        self.tangent = tangent

    @property
    def nd(self) -> int:
        return self.tangent.shape[-1]

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __len__(self) -> int:
        return len(self.value)

    def __getitem__(self, idx) -> "Dual":
        return Dual(self.value[idx], self.tangent[idx])

    def __repr__(self) -> str:
        return f"Dual(value={self.value!r}, nd={self.nd})"

    # --- aritmetikk ---

    def __neg__(self) -> "Dual":
        return Dual(-self.value, -self.tangent)

    def __pos__(self) -> "Dual":
        return self

    def __add__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        value = self.value + np.asarray(other, dtype=float)
        return Dual(value, self.tangent)

    __radd__ = __add__

    def __sub__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        value = self.value - np.asarray(other, dtype=float)
        return Dual(value, self.tangent)

    def __rsub__(self, other) -> "Dual":
        value = np.asarray(other, dtype=float) - self.value
        return Dual(value, -self.tangent)

    def __mul__(self, other) -> "Dual":
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.tangent * other.value[..., None] + other.tangent * self.value[..., None],
            )
        c = np.asarray(other, dtype=float)
        return Dual(self.value * c, self.tangent * c[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Dual":
        if isinstance(other, Dual):
            value = self.value / other.value
            tangent = (self.tangent - value[..., None] * other.tangent) / other.value[..., None]
            return Dual(value, tangent)
        c = np.asarray(other, dtype=float)
        return Dual(self.value / c, self.tangent / c[..., None])

    def __rtruediv__(self, other) -> "Dual":
        c = np.asarray(other, dtype=float)
        value = c / self.value
        return Dual(value, -(value / self.value)[..., None] * self.tangent)

    def __pow__(self, p) -> "Dual":
        if isinstance(p, Dual):
            return exp(p * log(self))
        p = float(p)
        if p == 2.0:
            return self * self
        value = self.value ** p
        slope = p * self.value ** (p - 1.0)
        return Dual(value, slope[..., None] * self.tangent)

    def __rpow__(self, base) -> "Dual":
        return exp(self * np.log(base))

    def sum(self, axis=None) -> "Dual":
        if axis is None:
            return Dual(self.value.sum(), self.tangent.reshape(-1, self.nd).sum(axis=0))
        if axis < 0:
            axis += self.value.ndim
        return Dual(self.value.sum(axis=axis), self.tangent.sum(axis=axis))


# === HJELPEFUNKSJONER ===

def is_dual(x) -> bool:
    return isinstance(x, Dual)


def value(x) -> np.ndarray:
    """Primærverdien til x (uendret for vanlige tall)."""
    if isinstance(x, Dual):
        return x.value
    return np.asarray(x, dtype=float)


def tangent_of(x, shape: tuple, nd: int) -> np.ndarray:
    """Tangent til x kringkastet til shape + (nd,); null for konstanter."""
    if isinstance(x, Dual):
        return np.broadcast_to(x.tangent, tuple(shape) + (nd,))
    return np.zeros(tuple(shape) + (nd,))


def seed(x, offset: int = 0, nd: int = None) -> Dual:
    """
    Lag en Dual der komponent i langs første akse får enhetsretning offset+i.

    Ekstra akser (f.eks. horisont-steg) deler samme retning, slik at én
    evaluering gir Jacobi-blokkene for alle steg samtidig.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    nd = n if nd is None else nd
    tangent = np.zeros(x.shape + (nd,))
    for i in range(n):
        tangent[i, ..., offset + i] = 1.0
    return Dual(x, tangent)


def exp(x):
    if isinstance(x, Dual):
        v = np.exp(x.value)
        return Dual(v, v[..., None] * x.tangent)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(np.log(x.value), x.tangent / x.value[..., None])
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        v = np.sqrt(x.value)
        return Dual(v, x.tangent / (2.0 * v)[..., None])
    return np.sqrt(x)


def where(cond, a, b):
    """Elementvis valg; cond beregnes fra verdier og deriveres ikke."""
    cond = np.asarray(cond, dtype=bool)
    if not (isinstance(a, Dual) or isinstance(b, Dual)):
        return np.where(cond, a, b)
    nd = a.nd if isinstance(a, Dual) else b.nd
    v = np.where(cond, value(a), value(b))
    t = np.where(cond[..., None], tangent_of(a, v.shape, nd), tangent_of(b, v.shape, nd))
    return Dual(v, t)


def minimum(a, b):
    return where(value(a) <= value(b), a, b)


def maximum(a, b):
    return where(value(a) >= value(b), a, b)


def smooth_floor(x, floor: float):
    """
    Glatt erstatning for max(x, floor) med x = 0 → floor.

    Brukes på massestrømmer inne i optimeringen slik at divisjoner er
    definert og deriverbare overalt.
    """
    return 0.5 * (x + sqrt(x * x + 4.0 * floor * floor))


def stack(items: Sequence, axis: int = 0):
    """np.stack som også håndterer blanding av Dual og konstanter."""
    duals = [it for it in items if isinstance(it, Dual)]
    if not duals:
        return np.stack(np.broadcast_arrays(*[np.asarray(it, dtype=float) for it in items]), axis=axis)
    nd = duals[0].nd
    shape = np.broadcast_shapes(*[value(it).shape for it in items])
    values = np.stack([np.broadcast_to(value(it), shape) for it in items], axis=axis)
    t_axis = axis if axis >= 0 else axis - 1
    tangents = np.stack([tangent_of(it, shape, nd) for it in items], axis=t_axis)
    return Dual(values, tangents)


def jacobian(out: Dual) -> np.ndarray:
    """Tangent-arrayen til et resultat; for vektor-ut gir dette Jacobi-matrisen."""
    return np.array(out.tangent)
