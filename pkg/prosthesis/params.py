"""Model parameters: human links from an anthropometric table, prosthesis links from a device fragment."""
import logging
import os
from dataclasses import dataclass, field, replace

import yaml

from config import Config
from prosthesis.errors import ConfigurationError, FormatError, ValidationError

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
SEXES = ("female", "male")
LINK_NAMES = ("torso", "l_thigh", "l_shank", "l_foot", "r_thigh", "socket", "p_shank", "p_foot")


@dataclass(frozen=True)
class LinkParams:
    mass: float # kg
    length: float # m
    com: float # m from the proximal joint along the link (forward of the ankle for feet)
    inertia: float # kg m^2 about the com


@dataclass(frozen=True)
class FootGeometry:
    heel: float = -0.05 # m, forward of the ankle
    toe: float = 0.15
    height: float = 0.08 # m, ankle above the sole


@dataclass(frozen=True)
class GroundSprings:
    stiffness: float = Config.spring_stiffness # N/m
    damping: float = Config.spring_damping # N s/m

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping <= 0:
            raise ValidationError(f"spring stiffness and damping must be positive, got {self.stiffness}, {self.damping}")


@dataclass(frozen=True)
class ProsthesisParams:
    socket: LinkParams
    shank: LinkParams
    foot: LinkParams
    foot_geometry: FootGeometry
    adapter_mass: float = 0.0

    @property
    def mass(self) -> float:
        return self.socket.mass + self.shank.mass + self.foot.mass


@dataclass(frozen=True)
class ModelParams:
    torso: LinkParams
    l_thigh: LinkParams
    l_shank: LinkParams
    l_foot: LinkParams
    r_thigh: LinkParams
    socket: LinkParams
    p_shank: LinkParams
    p_foot: LinkParams
    l_foot_geometry: FootGeometry
    p_foot_geometry: FootGeometry
    residual_length: float # m, right hip to the socket frame
    gravity: float = Config.gravity
    springs: GroundSprings | None = None
    knee_range: tuple = Config.knee_range
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def r_bar_b(self) -> float:
        return self.socket.length

    @property
    def r_pk(self) -> float:
        return self.p_shank.length

    @property
    def r_pa(self) -> float:
        return self.p_foot_geometry.height

    @property
    def leg_length(self) -> float:
        """Hip to sole of the intact leg."""
        return self.l_thigh.length + self.l_shank.length + self.l_foot_geometry.height

    @property
    def total_mass(self) -> float:
        return sum(getattr(self, name).mass for name in LINK_NAMES)

    def links(self) -> dict:
        return {name: getattr(self, name) for name in LINK_NAMES}

    def with_springs(self, springs: GroundSprings | None = GroundSprings()) -> "ModelParams":
        return replace(self, springs=springs)

    def validate(self) -> "ModelParams":
        for name, link in self.links().items():
            if link.mass <= 0:
                raise ValidationError(f"{name} mass must be positive, got {link.mass}")
            if link.inertia < 0:
                raise ValidationError(f"{name} inertia must be nonnegative, got {link.inertia}")
            if link.length <= 0:
                raise ValidationError(f"{name} length must be positive, got {link.length}")
        for name, geometry in (("left foot", self.l_foot_geometry), ("prosthesis foot", self.p_foot_geometry)):
            if geometry.heel >= geometry.toe:
                raise ValidationError(f"{name} heel offset {geometry.heel} must be behind toe offset {geometry.toe}")
            if geometry.height <= 0:
                raise ValidationError(f"{name} height must be positive, got {geometry.height}")
        if self.residual_length < 0:
            raise ValidationError(f"residual limb length must be nonnegative, got {self.residual_length}")
        if self.knee_range[0] >= self.knee_range[1]:
            raise ValidationError(f"knee range {self.knee_range} is empty")
        return self


def _read_yaml(path: str) -> dict:
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise FormatError(f"{path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path} must hold a mapping")
    return data


def _link(data: dict, label: str) -> LinkParams:
    try:
        return LinkParams(float(data["mass"]), float(data["length"]), float(data["com"]), float(data["inertia"]))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"link {label} is missing field {exc}") from exc


def load_anthropometry_table(path: str | None = None) -> dict:
    return _read_yaml(path or os.path.join(DATA_DIR, "anthropometry.yaml"))


def load_prosthesis(path: str | None = None) -> ProsthesisParams:
    """Load a prosthesis fragment; defaults to the shipped AMPRO3 file."""
    data = _read_yaml(path or os.path.join(DATA_DIR, "ampro3.yaml"))
    return ProsthesisParams(
        socket=_link(data["socket"], "socket"),
        shank=_link(data["shank"], "shank"),
        foot=_link(data["foot"], "foot"),
        foot_geometry=FootGeometry(**data["foot_geometry"]),
        adapter_mass=float(data.get("adapter_mass", 0.0)),
    )


def build_from_anthropometry(
    height: float,
    mass: float,
    sex: str,
    prosthesis: ProsthesisParams | None = None,
    springs: GroundSprings | None = None,
    include_adapter: bool = False,
    table: dict | None = None,
) -> ModelParams:
    """
    Scale the human links of a transfemoral amputee from height/mass/sex and attach the prosthesis.
    The human right shank and foot are replaced by the prosthesis.
    :param include_adapter: carry the adapter mass on the socket and check the worn system mass
    """
    if not 1.0 <= height <= 2.2:
        raise ValidationError(f"height must be within [1.0, 2.2] m, got {height}")
    if not 30.0 <= mass <= 150.0:
        raise ValidationError(f"mass must be within [30, 150] kg, got {mass}")
    if sex not in SEXES:
        raise ValidationError(f"sex must be one of {SEXES}, got {sex!r}")
    prosthesis = prosthesis or load_prosthesis()
    table = table or load_anthropometry_table()

    fractions = table["mass_fraction"][sex]
    lengths = {name: table["length_fraction"][name] * height for name in ("torso", "thigh", "shank")}
    com = table["com_fraction"]
    gyration = table["gyration_fraction"]
    foot_geometry = FootGeometry(**table["foot_geometry"])
    foot_length = foot_geometry.toe - foot_geometry.heel

    def limb(segment):
        m = fractions[segment] * mass
        L = lengths[segment]
        return LinkParams(m, L, com[segment] * L, m * (gyration[segment] * L) ** 2)

    torso_mass = mass * (1.0 - 2.0 * sum(fractions.values()))
    torso = LinkParams(
        torso_mass, lengths["torso"], com["torso"] * lengths["torso"],
        torso_mass * (gyration["torso"] * lengths["torso"]) ** 2,
    )
    foot_mass = fractions["foot"] * mass
    l_foot = LinkParams(
        foot_mass, foot_length, foot_geometry.heel + com["foot"] * foot_length,
        foot_mass * (gyration["foot"] * foot_length) ** 2,
    )
    thigh = limb("thigh")

    socket = prosthesis.socket
    if include_adapter:
        socket = replace(socket, mass=socket.mass + prosthesis.adapter_mass)
        worn = prosthesis.mass + prosthesis.adapter_mass
        if abs(worn - Config.worn_system_mass) > Config.mass_check_tol:
            raise ConfigurationError(
                f"worn prosthesis mass {worn:.3f} kg differs from {Config.worn_system_mass} kg"
            )

    # level the hips: the shorter leg gets a thicker sole
    residual = thigh.length - prosthesis.socket.length
    right_leg = residual + prosthesis.socket.length + prosthesis.shank.length + prosthesis.foot_geometry.height
    left_leg = thigh.length + lengths["shank"] + foot_geometry.height
    lift = right_leg - left_leg
    l_geometry = foot_geometry
    if lift >= 0:
        l_geometry = replace(foot_geometry, height=foot_geometry.height + lift)
    else:
        residual -= lift

    params = ModelParams(
        torso=torso,
        l_thigh=thigh,
        l_shank=limb("shank"),
        l_foot=l_foot,
        r_thigh=thigh,
        socket=socket,
        p_shank=prosthesis.shank,
        p_foot=prosthesis.foot,
        l_foot_geometry=l_geometry,
        p_foot_geometry=prosthesis.foot_geometry,
        residual_length=residual,
        springs=springs,
        metadata={"height": height, "mass": mass, "sex": sex, "include_adapter": include_adapter},
    )
    logger.debug("built %s model: %.2f m, %.1f kg, total model mass %.3f kg", sex, height, mass, params.total_mass)
    return params.validate()


_UNITS = {"mass": "kg", "length": "m", "com": "m", "inertia": "kg m^2", "heel": "m", "toe": "m", "height": "m"}


def save_params(params: ModelParams, path: str):
    """Write a YAML parameter file with units in trailing comments."""
    lines = ["# model parameters", "version: 1"]
    for name, link in params.links().items():
        lines.append(f"{name}:")
        for key in ("mass", "length", "com", "inertia"):
            lines.append(f"  {key}: {getattr(link, key)!r} # {_UNITS[key]}")
    for name in ("l_foot_geometry", "p_foot_geometry"):
        geometry = getattr(params, name)
        lines.append(f"{name}:")
        for key in ("heel", "toe", "height"):
            lines.append(f"  {key}: {getattr(geometry, key)!r} # {_UNITS[key]}")
    lines.append(f"residual_length: {params.residual_length!r} # m")
    lines.append(f"gravity: {params.gravity!r} # m/s^2")
    lines.append(f"knee_range: [{params.knee_range[0]!r}, {params.knee_range[1]!r}] # rad")
    if params.springs is None:
        lines.append("springs: null")
    else:
        lines.append("springs:")
        lines.append(f"  stiffness: {params.springs.stiffness!r} # N/m")
        lines.append(f"  damping: {params.springs.damping!r} # N s/m")
    lines.append(yaml.safe_dump({"metadata": dict(params.metadata)}, sort_keys=True).strip())
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def load_params(path: str) -> ModelParams:
    data = _read_yaml(path)
    try:
        springs = data.get("springs")
        params = ModelParams(
            **{name: _link(data[name], name) for name in LINK_NAMES},
            l_foot_geometry=FootGeometry(**data["l_foot_geometry"]),
            p_foot_geometry=FootGeometry(**data["p_foot_geometry"]),
            residual_length=float(data["residual_length"]),
            gravity=float(data.get("gravity", Config.gravity)),
            springs=GroundSprings(**springs) if springs else None,
            knee_range=tuple(data.get("knee_range", Config.knee_range)),
            metadata=dict(data.get("metadata") or {}),
        )
    except KeyError as exc:
        raise FormatError(f"{path} is missing {exc}") from exc
    return params.validate()
