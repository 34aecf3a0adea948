"""Vasculature description: vessels, wall mechanics, junctions, terminals.

The tube law is p = p_ext + beta*(sqrt(A) - sqrt(A0)) with
beta = sqrt(pi)*h*E / ((1 - nu^2)*A0), and the associated wave speed is
c = sqrt(beta*sqrt(A)/(2*rho)).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .waveform import InletWaveform

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

MAX_CHILDREN = 15


@dataclass(frozen=True)
class BloodProperties:
    density: float = 1050.0     # kg/m^3
    viscosity: float = 4.0e-3   # Pa*s

    def __post_init__(self):
        if not self.density > 0.0:
            raise ConfigError(f"blood density must be positive, got {self.density}")
        if self.viscosity < 0.0:
            raise ConfigError(f"blood viscosity must be nonnegative, got {self.viscosity}")

    @property
    def friction(self):
        """f = -22*mu*pi, the Poiseuille-profile wall drag coefficient."""
        return -22.0 * self.viscosity * math.pi


@dataclass(frozen=True)
class WallProperties:
    thickness: float        # m
    elastic_modulus: float  # Pa
    poisson: float = 0.5

    def __post_init__(self):
        if not self.thickness > 0.0:
            raise ConfigError(f"wall thickness must be positive, got {self.thickness}")
        if not self.elastic_modulus > 0.0:
            raise ConfigError(
                f"wall elastic modulus must be positive, got {self.elastic_modulus}"
            )
        if not abs(self.poisson) < 1.0:
            raise ConfigError(f"Poisson ratio must satisfy |nu| < 1, got {self.poisson}")


def compute_beta(wall, reference_area):
    """Tube-law stiffness beta = sqrt(pi)*h*E / ((1 - nu^2)*A0)."""
    if not reference_area > 0.0:
        raise ConfigError(f"reference area must be positive, got {reference_area}")
    return (
        math.sqrt(math.pi)
        * wall.thickness
        * wall.elastic_modulus
        / ((1.0 - wall.poisson**2) * reference_area)
    )


def pressure(beta, area, reference_area, external_pressure=0.0):
    """Transmural tube law. Accepts scalars or arrays for area."""
    return external_pressure + beta * (np.sqrt(area) - np.sqrt(reference_area))


def wave_speed(beta, area, density):
    """Characteristic speed c = sqrt(beta*sqrt(A)/(2*rho))."""
    return np.sqrt(beta * np.sqrt(area) / (2.0 * density))


@dataclass
class Vessel:
    """One 1D segment. `area` is a scalar A0 or polynomial coefficients in x
    (lowest order first) for a tapered reference profile. When wall properties
    are given instead of beta, beta is computed from the proximal (x=0)
    reference area and held constant along the vessel."""

    id: int
    length: float
    area: object                    # float or sequence of poly coefficients
    grid_points: int = 100
    beta: float = None
    wall: WallProperties = None
    external_pressure: float = 0.0

    def __post_init__(self):
        if not isinstance(self.id, int) or self.id < 1:
            raise ConfigError(f"vessel id must be a positive integer, got {self.id!r}")
        if not self.length > 0.0:
            raise ConfigError(f"vessel {self.id}: length must be positive, got {self.length}")
        if self.grid_points < 3:
            raise ConfigError(
                f"vessel {self.id}: needs at least 3 grid points, got {self.grid_points}"
            )
        if np.isscalar(self.area):
            self.area = float(self.area)
            coeffs = (self.area,)
        else:
            coeffs = tuple(float(v) for v in self.area)
            self.area = coeffs
        nodes = np.polynomial.polynomial.polyval(self.x_grid(), coeffs)
        if not np.all(nodes > 0.0):
            raise ConfigError(f"vessel {self.id}: reference area must stay positive")
        if (self.beta is None) == (self.wall is None):
            raise ConfigError(
                f"vessel {self.id}: give exactly one of beta or wall properties"
            )
        if self.beta is None:
            self.beta = compute_beta(self.wall, float(nodes[0]))
        if not self.beta > 0.0:
            raise ConfigError(f"vessel {self.id}: beta must be positive, got {self.beta}")

    def x_grid(self):
        return np.linspace(0.0, self.length, self.grid_points)

    def reference_area(self, x=None):
        """A0 evaluated at x (defaults to the full grid)."""
        if x is None:
            x = self.x_grid()
        coeffs = (self.area,) if np.isscalar(self.area) else self.area
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coeffs)

    @property
    def dx(self):
        return self.length / (self.grid_points - 1)


@dataclass
class WindkesselOutlet:
    """RCR terminal. R1 is derived from the vessel's nominal outlet impedance
    (rho*c0/A0 at the distal end); R2 = Rt - R1."""

    vessel: int
    resistance: float          # Rt = R1 + R2, Pa*s/m^3
    compliance: float          # C, m^3/Pa
    distal_pressure: float = 0.0
    r1: float = field(default=None, compare=False)
    r2: float = field(default=None, compare=False)

    def __post_init__(self):
        if not self.resistance > 0.0:
            raise ConfigError(
                f"outlet {self.vessel}: total resistance must be positive, "
                f"got {self.resistance}"
            )
        if self.compliance < 0.0:
            raise ConfigError(
                f"outlet {self.vessel}: compliance must be nonnegative, "
                f"got {self.compliance}"
            )


@dataclass(frozen=True)
class Junction:
    parent: int
    children: tuple

    def __post_init__(self):
        kids = tuple(int(c) for c in self.children)
        object.__setattr__(self, "children", kids)
        if len(kids) < 1:
            raise ConfigError(f"junction at vessel {self.parent} has no children")
        if len(kids) > MAX_CHILDREN:
            raise ConfigError(
                f"junction at vessel {self.parent} has {len(kids)} children; "
                f"at most {MAX_CHILDREN} supported"
            )
        if self.parent in kids:
            raise ConfigError(f"junction at vessel {self.parent} lists itself as a child")
        if len(set(kids)) != len(kids):
            raise ConfigError(f"junction at vessel {self.parent} repeats a child")


@dataclass
class NetworkTopology:
    blood: BloodProperties
    vessels: dict               # id -> Vessel
    junctions: list             # [Junction]
    inlets: dict                # vessel id -> InletWaveform
    outlets: dict               # vessel id -> WindkesselOutlet

    def __post_init__(self):
        self._validate()

    def _validate(self):
        if not self.vessels:
            raise ConfigError("network has no vessels")
        for vid, v in self.vessels.items():
            if vid != v.id:
                raise ConfigError(f"vessel key {vid} does not match vessel id {v.id}")
        for vid in list(self.inlets) + list(self.outlets):
            if vid not in self.vessels:
                raise ConfigError(f"inlet/outlet references unknown vessel {vid}")
        if not self.inlets:
            raise ConfigError("network needs at least one inlet")

        periods = {wf.period for wf in self.inlets.values()}
        if len(periods) > 1:
            raise ConfigError(f"all inlet waveforms must share one period, got {periods}")

        # each vessel end must be attached exactly once
        left = {vid: ("inlet" if vid in self.inlets else None) for vid in self.vessels}
        right = {vid: ("outlet" if vid in self.outlets else None) for vid in self.vessels}
        for j in self.junctions:
            if j.parent not in self.vessels:
                raise ConfigError(f"junction parent {j.parent} is not a vessel")
            if right[j.parent] is not None:
                raise ConfigError(
                    f"vessel {j.parent}: distal end attached twice "
                    f"({right[j.parent]} and junction)"
                )
            right[j.parent] = "junction"
            for c in j.children:
                if c not in self.vessels:
                    raise ConfigError(f"junction child {c} is not a vessel")
                if left[c] is not None:
                    raise ConfigError(
                        f"vessel {c}: proximal end attached twice "
                        f"({left[c]} and junction)"
                    )
                left[c] = "junction"
        for vid in self.vessels:
            if left[vid] is None:
                raise ConfigError(f"vessel {vid}: proximal end unattached")
            if right[vid] is None:
                raise ConfigError(f"vessel {vid}: distal end unattached")

        # reachability from the inlets (tree structure, no orphan subgraphs)
        children_of = {j.parent: j.children for j in self.junctions}
        seen = set()
        stack = list(self.inlets)
        while stack:
            vid = stack.pop()
            if vid in seen:
                raise ConfigError(f"vessel {vid} reached twice; network must be a tree")
            seen.add(vid)
            stack.extend(children_of.get(vid, ()))
        if seen != set(self.vessels):
            missing = sorted(set(self.vessels) - seen)
            raise ConfigError(f"vessels unreachable from any inlet: {missing}")

        # split each terminal Rt into R1 (nominal outlet impedance) + R2.
        # Realized copies of a randomized network arrive with the split already
        # pinned to the configured geometry (see apply_sample); recomputing it
        # from a scaled area would push R1 past the sampled Rt.
        rho = self.blood.density
        for vid, out in self.outlets.items():
            if out.r1 is None:
                v = self.vessels[vid]
                a_end = float(v.reference_area(v.length))
                c_end = wave_speed(v.beta, a_end, rho)
                out.r1 = rho * c_end / a_end
                out.r2 = out.resistance - out.r1
            if out.r2 < 0.0:
                raise ConfigError(
                    f"outlet {vid}: total resistance {out.resistance:g} is below the "
                    f"characteristic impedance {out.r1:g} (R2 would be negative)"
                )

    @property
    def vessel_ids(self):
        return sorted(self.vessels)

    @property
    def period(self):
        return next(iter(self.inlets.values())).period

    def total_nodes(self):
        return sum(v.grid_points for v in self.vessels.values())


def _require(table, key, where):
    if key not in table:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return table[key]


def network_from_dict(doc):
    """Build a NetworkTopology from a parsed TOML document."""
    blood_tab = doc.get("blood", {})
    blood = BloodProperties(
        density=float(blood_tab.get("density", 1050.0)),
        viscosity=float(blood_tab.get("viscosity", 4.0e-3)),
    )

    vtab = doc.get("vessel", {})
    if not isinstance(vtab, dict) or not vtab:
        raise ConfigError("config has no [vessel.<id>] tables")
    vessels = {}
    for key, tab in vtab.items():
        try:
            vid = int(key)
        except ValueError:
            raise ConfigError(f"vessel table name must be an integer id, got '{key}'")
        wall = None
        beta = tab.get("beta")
        if "wall" in tab:
            w = tab["wall"]
            wall = WallProperties(
                thickness=float(_require(w, "thickness", f"vessel {vid} wall")),
                elastic_modulus=float(_require(w, "elastic_modulus", f"vessel {vid} wall")),
                poisson=float(w.get("poisson", 0.5)),
            )
        vessels[vid] = Vessel(
            id=vid,
            length=float(_require(tab, "length", f"vessel {vid}")),
            area=_require(tab, "area", f"vessel {vid}"),
            grid_points=int(tab.get("grid_points", 100)),
            beta=None if beta is None else float(beta),
            wall=wall,
            external_pressure=float(tab.get("external_pressure", 0.0)),
        )

    junctions = []
    for tab in doc.get("junction", []):
        junctions.append(
            Junction(
                parent=int(_require(tab, "parent", "junction")),
                children=tuple(int(c) for c in _require(tab, "children", "junction")),
            )
        )

    inlets = {}
    for key, tab in doc.get("inlet", {}).items():
        vid = int(key)
        inlets[vid] = InletWaveform(
            period=float(_require(tab, "period", f"inlet {vid}")),
            base=float(_require(tab, "base", f"inlet {vid}")),
            peaks=tuple(float(v) for v in _require(tab, "peaks", f"inlet {vid}")),
            centers=tuple(float(v) for v in _require(tab, "centers", f"inlet {vid}")),
            widths=tuple(float(v) for v in _require(tab, "widths", f"inlet {vid}")),
        )

    outlets = {}
    for key, tab in doc.get("outlet", {}).items():
        vid = int(key)
        outlets[vid] = WindkesselOutlet(
            vessel=vid,
            resistance=float(_require(tab, "resistance", f"outlet {vid}")),
            compliance=float(_require(tab, "compliance", f"outlet {vid}")),
            distal_pressure=float(tab.get("distal_pressure", 0.0)),
        )

    return NetworkTopology(
        blood=blood, vessels=vessels, junctions=junctions, inlets=inlets, outlets=outlets
    )


def load_network(path):
    """Parse the network sections of a TOML config file."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return network_from_dict(doc)


def _fmt(value):
    """TOML literal for a Python value; floats use repr so round-trips are bit-exact."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        r = repr(value)
        # TOML requires a decimal point or exponent in float literals
        if "e" not in r and "." not in r and "n" not in r:
            r += ".0"
        return r
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize value {value!r}")


def serialize_network(net):
    """Render the network as TOML text. load(serialize(net)) reproduces every
    numeric field bit-exactly."""
    lines = ["[blood]"]
    lines.append(f"density = {_fmt(net.blood.density)}")
    lines.append(f"viscosity = {_fmt(net.blood.viscosity)}")
    for vid in net.vessel_ids:
        v = net.vessels[vid]
        lines.append("")
        lines.append(f"[vessel.{vid}]")
        lines.append(f"length = {_fmt(v.length)}")
        area = v.area if np.isscalar(v.area) else list(v.area)
        lines.append(f"area = {_fmt(area)}")
        lines.append(f"grid_points = {v.grid_points}")
        if v.wall is not None:
            lines.append(f"external_pressure = {_fmt(v.external_pressure)}")
            lines.append(f"[vessel.{vid}.wall]")
            lines.append(f"thickness = {_fmt(v.wall.thickness)}")
            lines.append(f"elastic_modulus = {_fmt(v.wall.elastic_modulus)}")
            lines.append(f"poisson = {_fmt(v.wall.poisson)}")
        else:
            lines.append(f"beta = {_fmt(v.beta)}")
            lines.append(f"external_pressure = {_fmt(v.external_pressure)}")
    for j in net.junctions:
        lines.append("")
        lines.append("[[junction]]")
        lines.append(f"parent = {j.parent}")
        lines.append(f"children = {_fmt(list(j.children))}")
    for vid in sorted(net.inlets):
        wf = net.inlets[vid]
        lines.append("")
        lines.append(f"[inlet.{vid}]")
        lines.append(f"period = {_fmt(wf.period)}")
        lines.append(f"base = {_fmt(wf.base)}")
        lines.append(f"peaks = {_fmt(list(wf.peaks))}")
        lines.append(f"centers = {_fmt(list(wf.centers))}")
        lines.append(f"widths = {_fmt(list(wf.widths))}")
    for vid in sorted(net.outlets):
        out = net.outlets[vid]
        lines.append("")
        lines.append(f"[outlet.{vid}]")
        lines.append(f"resistance = {_fmt(out.resistance)}")
        lines.append(f"compliance = {_fmt(out.compliance)}")
        lines.append(f"distal_pressure = {_fmt(out.distal_pressure)}")
    return "\n".join(lines) + "\n"
