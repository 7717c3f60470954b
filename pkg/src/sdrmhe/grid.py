"""Network model, bus admittance matrix and Hermitian measurement matrices.

Buses are 1-indexed in every public signature and file format; arrays are
0-indexed internally.  Every measured quantity is a Hermitian quadratic form
``h(v) = v^H H v = Tr(H v v^H)`` of the complex bus-voltage vector ``v``.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ModelValidationError(ValueError):
    """A grid, line or measurement descriptor is inconsistent."""


class LineLookupError(KeyError):
    """A bus pair does not correspond to any line of the grid."""


@dataclass(frozen=True)
class LineParams:
    from_bus: int
    to_bus: int
    series_admittance: complex
    shunt_from: complex = 0j
    shunt_to: complex = 0j

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ModelValidationError(f"line {self.from_bus}-{self.to_bus} is a self loop")
        if not np.isfinite(complex(self.series_admittance)):
            raise ModelValidationError("series admittance must be finite")


@dataclass(frozen=True)
class GridModel:
    """Immutable network description.

    ``bus_shunts[n-1]`` is the shunt of bus ``n`` to ground.  The shunt ends of
    each line are kept on the line and folded into the admittance diagonal by
    :func:`build_admittance`.
    """

    bus_count: int
    lines: tuple[LineParams, ...]
    bus_shunts: tuple[complex, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.bus_count < 1:
            raise ModelValidationError("bus_count must be positive")
        object.__setattr__(self, "lines", tuple(self.lines))
        shunts = tuple(complex(s) for s in self.bus_shunts) or (0j,) * self.bus_count
        if len(shunts) != self.bus_count:
            raise ModelValidationError(
                f"expected {self.bus_count} bus shunts, got {len(shunts)}"
            )
        object.__setattr__(self, "bus_shunts", shunts)
        seen = set()
        for line in self.lines:
            for b in (line.from_bus, line.to_bus):
                if not 1 <= b <= self.bus_count:
                    raise ModelValidationError(
                        f"bus {b} out of range 1..{self.bus_count}"
                    )
            key = frozenset((line.from_bus, line.to_bus))
            if key in seen:
                raise ModelValidationError(
                    f"duplicate line {line.from_bus}-{line.to_bus}"
                )
            seen.add(key)

    def find_line(self, m: int, n: int) -> tuple[LineParams, bool]:
        """Return the line joining ``m`` and ``n`` and whether ``m`` is its from end."""
        for line in self.lines:
            if (line.from_bus, line.to_bus) == (m, n):
                return line, True
            if (line.from_bus, line.to_bus) == (n, m):
                return line, False
        raise LineLookupError(f"no line between buses {m} and {n}")


class Kind(str, Enum):
    ACTIVE_INJECTION = "ActiveInjection"
    REACTIVE_INJECTION = "ReactiveInjection"
    ACTIVE_FLOW = "ActiveFlow"
    REACTIVE_FLOW = "ReactiveFlow"
    VOLTAGE_MAGNITUDE = "SquaredVoltageMagnitude"

    @property
    def is_flow(self) -> bool:
        return self in (Kind.ACTIVE_FLOW, Kind.REACTIVE_FLOW)


@dataclass(frozen=True)
class MeasurementDescriptor:
    """One meter: what it measures and where.

    ``buses`` holds ``(n,)`` for bus quantities and ``(m, n)`` for the flow out
    of ``m`` towards ``n``.
    """

    kind: Kind
    buses: tuple[int, ...]
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        expected = 2 if self.kind.is_flow else 1
        if len(self.buses) != expected:
            raise ModelValidationError(
                f"{self.kind.value} takes {expected} bus indices, got {self.buses}"
            )
        if not self.weight > 0:
            raise ModelValidationError("measurement weight must be positive")

    def label(self) -> str:
        return f"{self.kind.value}({','.join(map(str, self.buses))})"


def active_injection(n, weight=1.0):
    return MeasurementDescriptor(Kind.ACTIVE_INJECTION, (n,), weight)


def reactive_injection(n, weight=1.0):
    return MeasurementDescriptor(Kind.REACTIVE_INJECTION, (n,), weight)


def active_flow(m, n, weight=1.0):
    return MeasurementDescriptor(Kind.ACTIVE_FLOW, (m, n), weight)


def reactive_flow(m, n, weight=1.0):
    return MeasurementDescriptor(Kind.REACTIVE_FLOW, (m, n), weight)


def voltage_magnitude(n, weight=1.0):
    return MeasurementDescriptor(Kind.VOLTAGE_MAGNITUDE, (n,), weight)


def validate_descriptor(grid: GridModel, d: MeasurementDescriptor) -> None:
    for b in d.buses:
        if not 1 <= b <= grid.bus_count:
            raise ModelValidationError(f"{d.label()}: bus {b} out of range")
    if d.kind.is_flow:
        try:
            grid.find_line(*d.buses)
        except LineLookupError as exc:
            raise ModelValidationError(f"{d.label()}: {exc.args[0]}") from None


def flow_plan(grid: GridModel, line_positions: Iterable[int]) -> list[MeasurementDescriptor]:
    """Active and reactive from-end flows on the given 1-based line positions."""
    lines = [grid.lines[i - 1] for i in line_positions]
    plan = [active_flow(ln.from_bus, ln.to_bus) for ln in lines]
    plan += [reactive_flow(ln.from_bus, ln.to_bus) for ln in lines]
    return plan


def full_plan(grid: GridModel) -> list[MeasurementDescriptor]:
    """Every injection, both-direction flow and squared magnitude of the grid."""
    buses = range(1, grid.bus_count + 1)
    plan = [active_injection(n) for n in buses]
    plan += [reactive_injection(n) for n in buses]
    for ln in grid.lines:
        for m, n in ((ln.from_bus, ln.to_bus), (ln.to_bus, ln.from_bus)):
            plan += [active_flow(m, n), reactive_flow(m, n)]
    plan += [voltage_magnitude(n) for n in buses]
    return plan


def build_admittance(grid: GridModel) -> np.ndarray:
    """Bus admittance matrix.

    The diagonal carries the total shunt to ground at each bus (its own shunt
    plus the shunt ends of incident lines) and the sum of incident series
    admittances; off-diagonals are minus the series admittance.
    """
    N = grid.bus_count
    Y = np.diag(np.asarray(grid.bus_shunts, dtype=complex))
    for ln in grid.lines:
        m, n = ln.from_bus - 1, ln.to_bus - 1
        y = complex(ln.series_admittance)
        Y[m, n] -= y
        Y[n, m] -= y
        Y[m, m] += y + ln.shunt_from
        Y[n, n] += y + ln.shunt_to
    assert Y.shape == (N, N)
    return Y


def flow_matrix(grid: GridModel, m: int, n: int) -> np.ndarray:
    """Row-``m`` matrix ``Y^{mn}`` with ``e_m^T Y^{mn} v = I^{mn}``.

    The shunt used is the one sitting at bus ``m``'s end of the line.
    """
    line, forward = grid.find_line(m, n)
    shunt = line.shunt_from if forward else line.shunt_to
    y = complex(line.series_admittance)
    Ymn = np.zeros((grid.bus_count, grid.bus_count), dtype=complex)
    Ymn[m - 1, m - 1] = shunt + y
    Ymn[m - 1, n - 1] = -y
    return Ymn


def _hermitian_parts(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    AH = A.conj().T
    return 0.5 * (A + AH), 0.5j * (A - AH)


def measurement_matrix(
    grid: GridModel, d: MeasurementDescriptor, Y: np.ndarray | None = None
) -> np.ndarray:
    """Hermitian ``H`` such that the measured quantity equals ``v^H H v``."""
    validate_descriptor(grid, d)
    N = grid.bus_count
    if d.kind is Kind.VOLTAGE_MAGNITUDE:
        H = np.zeros((N, N), dtype=complex)
        H[d.buses[0] - 1, d.buses[0] - 1] = 1.0
        return H
    if d.kind.is_flow:
        A = flow_matrix(grid, *d.buses)
    else:
        if Y is None:
            Y = build_admittance(grid)
        A = np.zeros((N, N), dtype=complex)
        A[d.buses[0] - 1] = Y[d.buses[0] - 1]
    HP, HQ = _hermitian_parts(A)
    if d.kind in (Kind.ACTIVE_INJECTION, Kind.ACTIVE_FLOW):
        return HP
    return HQ


def measurement_matrices(grid: GridModel, plan: Sequence[MeasurementDescriptor]) -> np.ndarray:
    """Stack of measurement matrices, shape ``(L, N, N)``."""
    Y = build_admittance(grid)
    if not plan:
        return np.zeros((0, grid.bus_count, grid.bus_count), dtype=complex)
    return np.stack([measurement_matrix(grid, d, Y) for d in plan])


def evaluate_measurement(H: np.ndarray, v: np.ndarray) -> float | np.ndarray:
    """``v^H H v`` for one matrix or a stack of them (real part)."""
    H = np.asarray(H)
    v = np.asarray(v)
    if H.shape[-1] != v.shape[-1] or H.shape[-2] != v.shape[-1]:
        raise ValueError(f"dimension mismatch: H {H.shape}, v {v.shape}")
    val = np.einsum("i,...ij,j->...", v.conj(), H, v)
    return val.real if val.ndim else float(val.real)


@dataclass
class PowerFlows:
    """Directly computed electrical quantities for a voltage vector."""

    injection: np.ndarray  # complex S^n, length N
    flows: dict[tuple[int, int], complex] = field(default_factory=dict)
    magnitude_sq: np.ndarray | None = None

    def value(self, d: MeasurementDescriptor) -> float:
        if d.kind is Kind.VOLTAGE_MAGNITUDE:
            return float(self.magnitude_sq[d.buses[0] - 1])
        if d.kind.is_flow:
            s = self.flows[d.buses]
        else:
            s = self.injection[d.buses[0] - 1]
        if d.kind in (Kind.ACTIVE_INJECTION, Kind.ACTIVE_FLOW):
            return float(s.real)
        return float(s.imag)


def power_flow_oracle(grid: GridModel, v: np.ndarray) -> PowerFlows:
    """Complex powers from branch currents, without any lifted matrices.

    Injected current at a bus is the sum of currents leaving it through its
    lines plus the current into its own shunt.
    """
    v = np.asarray(v, dtype=complex)
    if v.shape != (grid.bus_count,):
        raise ValueError(f"expected {grid.bus_count} voltages, got shape {v.shape}")
    current = np.asarray(grid.bus_shunts) * v
    flows = {}
    for ln in grid.lines:
        for m, n, sh in ((ln.from_bus, ln.to_bus, ln.shunt_from),
                         (ln.to_bus, ln.from_bus, ln.shunt_to)):
            Vm, Vn = v[m - 1], v[n - 1]
            Imn = sh * Vm + ln.series_admittance * (Vm - Vn)
            flows[(m, n)] = Vm * np.conj(Imn)
            current[m - 1] += Imn
    return PowerFlows(v * current.conj(), flows, np.abs(v) ** 2)


def measure(grid: GridModel, plan: Sequence[MeasurementDescriptor], v: np.ndarray) -> np.ndarray:
    """Noise-free measurement vector via the direct oracle."""
    pf = power_flow_oracle(grid, v)
    return np.array([pf.value(d) for d in plan])


def _complex(pair) -> complex:
    if isinstance(pair, (int, float)):
        return complex(pair)
    re, im = pair
    return complex(re, im)


def grid_from_dict(data: dict) -> GridModel:
    """Build a grid from the parsed case-file mapping."""
    allowed = {"name", "bus_count", "bus_shunts", "branch"}
    unknown = set(data) - allowed
    if unknown:
        raise ModelValidationError(f"unknown case-file keys: {sorted(unknown)}")
    lines = []
    for i, br in enumerate(data.get("branch", []), start=1):
        extra = set(br) - {"from", "to", "series", "shunt_from", "shunt_to"}
        if extra:
            raise ModelValidationError(f"branch {i}: unknown keys {sorted(extra)}")
        lines.append(
            LineParams(
                int(br["from"]),
                int(br["to"]),
                _complex(br["series"]),
                _complex(br.get("shunt_from", 0.0)),
                _complex(br.get("shunt_to", 0.0)),
            )
        )
    shunts = [_complex(s) for s in data.get("bus_shunts", [])]
    return GridModel(int(data["bus_count"]), tuple(lines), tuple(shunts), data.get("name", ""))


def load_grid(path: str | Path) -> GridModel:
    """Read a TOML grid case file.  ``builtin:<name>`` loads a packaged case."""
    path = str(path)
    if path.startswith("builtin:"):
        text = resources.files("sdrmhe.data").joinpath(path[8:] + ".toml").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelValidationError(f"{path}: {exc}") from None
    try:
        return grid_from_dict(data)
    except KeyError as exc:
        raise ModelValidationError(f"{path}: missing key {exc}") from None


def case6ww() -> GridModel:
    return load_grid("builtin:case6ww")
