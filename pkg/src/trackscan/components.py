"""Track component vocabulary.

Component labels, footage file names, the catalog of the fifteen standard
test cases and run manifests pairing control and variable footage.
"""

import enum
import re
from dataclasses import dataclass
from typing import Iterable

NUM_TIES = 9
NUM_RAILS = 2
NUM_CASES = 15
NUM_TRIALS = 5
CONTROL_CASE = 1

_LABEL_PATTERN = re.compile(r"^(?:(?P<rail>\d)-)?(?P<tie>\d)(?P<kind>[SWBC])$")
_FOOTAGE_PATTERN = re.compile(r"^(?P<case>\d{2})_(?P<medium>[FV])_T(?P<trial>\d)$")


class LabelError(ValueError):
    """Malformed or out-of-range component label."""


class FootageNameError(ValueError):
    """Malformed or out-of-range footage name."""


class ManifestError(ValueError):
    """Invalid run manifest request."""


class ComponentKind(enum.Enum):
    SCREW = "S"
    WASHER = "W"
    BLOCK = "B"
    CONNECTOR = "C"

    @classmethod
    def from_name(cls, name: str) -> "ComponentKind":
        """Look up a kind by its (case-insensitive) name, e.g. 'block'."""
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"Unknown component kind: {name!r}") from None


class Medium(enum.Enum):
    FRAME = "F"
    VIDEO = "V"


class PairingPolicy(enum.Enum):
    SAME_TRIAL = "same"
    SHIFTED_TRIAL = "shifted"


@dataclass(frozen=True)
class ComponentId:
    """One physical track component.

    Blocks carry no rail index. Screws, washers and connectors are attached
    to one of the two rails. Connectors only exist at the track ends, near
    ties 1 and 9.
    """

    kind: ComponentKind
    tie: int
    rail: int | None = None

    def __post_init__(self):
        if not 1 <= self.tie <= NUM_TIES:
            raise LabelError(f"Tie must be in 1..{NUM_TIES}, got {self.tie}")
        if self.kind is ComponentKind.BLOCK:
            if self.rail is not None:
                raise LabelError("A block does not carry a rail index")
        elif self.rail not in (1, 2):
            raise LabelError(f"Rail must be 1 or 2, got {self.rail}")
        if self.kind is ComponentKind.CONNECTOR and self.tie not in (1, NUM_TIES):
            raise LabelError(f"Connector tie must be 1 or {NUM_TIES}, got {self.tie}")

    @property
    def sort_key(self) -> tuple[int, int, int]:
        """Position in the inventory: blocks, screws, washers, connectors."""
        return (_KIND_RANK[self.kind], self.rail or 0, self.tie)

    def __lt__(self, other: "ComponentId") -> bool:
        return self.sort_key < other.sort_key

    @property
    def label(self) -> str:
        return format_component_label(self)

    def __str__(self) -> str:
        return self.label


_KIND_RANK = {
    ComponentKind.BLOCK: 0,
    ComponentKind.SCREW: 1,
    ComponentKind.WASHER: 2,
    ComponentKind.CONNECTOR: 3,
}


def parse_component_label(text: str) -> ComponentId:
    """Parse a canonical component label like '1-8S' or '8B'.

    Labels are case-sensitive and whitespace is not tolerated.

    Args:
        text (str): the label.

    Raises:
        LabelError: if the label is malformed or out of range.

    Returns:
        ComponentId: the component.
    """
    if not text:
        raise LabelError("Empty component label")
    match = _LABEL_PATTERN.match(text)
    if match is None:
        raise LabelError(f"Malformed component label: {text!r}")
    kind = ComponentKind(match["kind"])
    rail = int(match["rail"]) if match["rail"] is not None else None
    if kind is ComponentKind.BLOCK and rail is not None:
        raise LabelError(f"A block label carries no rail prefix: {text!r}")
    if kind is not ComponentKind.BLOCK and rail is None:
        raise LabelError(f"Missing rail prefix: {text!r}")
    return ComponentId(kind=kind, tie=int(match["tie"]), rail=rail)


def format_component_label(id: ComponentId) -> str:
    """Format a component as its canonical label."""
    if id.kind is ComponentKind.BLOCK:
        return f"{id.tie}B"
    return f"{id.rail}-{id.tie}{id.kind.value}"


def component_inventory() -> tuple[ComponentId, ...]:
    """Return all 49 components of the standard track in inventory order."""
    blocks = [ComponentId(ComponentKind.BLOCK, tie) for tie in range(1, NUM_TIES + 1)]
    fasteners = [
        ComponentId(kind, tie, rail)
        for kind in (ComponentKind.SCREW, ComponentKind.WASHER)
        for rail in range(1, NUM_RAILS + 1)
        for tie in range(1, NUM_TIES + 1)
    ]
    connectors = [
        ComponentId(ComponentKind.CONNECTOR, tie, rail)
        for rail in range(1, NUM_RAILS + 1)
        for tie in (1, NUM_TIES)
    ]
    return tuple(blocks + fasteners + connectors)


@dataclass(frozen=True)
class DefectSet:
    """A set of missing components. The empty set means the track is safe."""

    missing: frozenset[ComponentId] = frozenset()

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "DefectSet":
        labels = list(labels)
        missing = frozenset(parse_component_label(label) for label in labels)
        if len(missing) != len(labels):
            raise LabelError(f"Duplicate labels in defect set: {labels}")
        return cls(missing)

    @property
    def labels(self) -> list[str]:
        """Canonical labels, sorted in inventory order."""
        return [id.label for id in sorted(self.missing)]

    @property
    def is_safe(self) -> bool:
        return not self.missing

    def __len__(self) -> int:
        return len(self.missing)

    def __iter__(self):
        return iter(sorted(self.missing))

    def __contains__(self, id: ComponentId) -> bool:
        return id in self.missing


@dataclass(frozen=True)
class TestCase:
    # not a pytest test class
    __test__ = False

    number: int
    description: str
    defects: DefectSet


_CASE_TABLE = [
    ("Standard Good Track", []),
    (
        "1 Screw, 1 Washer, 1 Block, 1 Connector missing",
        ["1-9S", "1-9W", "9B", "1-9C"],
    ),
    (
        "2 Screws, 2 Washers, 2 Blocks, 2 Connectors missing",
        ["1-5S", "2-5S", "1-5W", "2-5W", "5B", "9B", "1-9C", "2-9C"],
    ),
    ("1 Screw missing", ["1-7S"]),
    ("2 Screws missing", ["1-7S", "2-4S"]),
    ("1 Washer missing", ["1-3W"]),
    ("2 Washers missing", ["1-3W", "2-7W"]),
    ("1 Block missing", ["1B"]),
    ("2 Block missing", ["2B", "6B"]),
    ("1 Connector missing", ["1-1C"]),
    ("2 Connectors missing", ["2-1C", "2-9C"]),
    ("1 Screw, 1 Washer, 1 Connector missing", ["1-3S", "1-3W", "2-1C"]),
    ("2 Screws, 2 Washers missing", ["1-7S", "2-4S", "1-7W", "2-4W"]),
    (
        "2 Screws, 2 Washers, 1 Block missing",
        ["1-8S", "2-8S", "1-8W", "2-8W", "8B"],
    ),
    (
        "2 Screws, 2 Washers, 1 Block, 1 Connector missing",
        ["1-8S", "2-8S", "1-8W", "2-8W", "8B", "2-1C"],
    ),
]


def standard_test_cases() -> list[TestCase]:
    """Return the fifteen standard test cases, ordered by case number."""
    return [
        TestCase(number=number, description=description, defects=DefectSet.from_labels(labels))
        for number, (description, labels) in enumerate(_CASE_TABLE, start=1)
    ]


def get_test_case(number: int) -> TestCase:
    if not 1 <= number <= NUM_CASES:
        raise ValueError(f"Case number must be in 1..{NUM_CASES}, got {number}")
    return standard_test_cases()[number - 1]


@dataclass(frozen=True)
class FootageId:
    case_number: int
    medium: Medium
    trial: int

    def __post_init__(self):
        if not 1 <= self.case_number <= NUM_CASES:
            raise FootageNameError(
                f"Case number must be in 1..{NUM_CASES}, got {self.case_number}"
            )
        if not 1 <= self.trial <= NUM_TRIALS:
            raise FootageNameError(f"Trial must be in 1..{NUM_TRIALS}, got {self.trial}")

    @property
    def name(self) -> str:
        return format_footage_name(self)

    def __str__(self) -> str:
        return self.name


def parse_footage_name(text: str) -> FootageId:
    """Parse a footage name like '01_F_T2' or '15_V_T5.jpg'.

    An optional file extension is stripped before parsing.

    Raises:
        FootageNameError: if the name is malformed or out of range.
    """
    if not text:
        raise FootageNameError("Empty footage name")
    stem = text.split(".", 1)[0]
    match = _FOOTAGE_PATTERN.match(stem)
    if match is None:
        raise FootageNameError(f"Malformed footage name: {text!r}")
    return FootageId(
        case_number=int(match["case"]),
        medium=Medium(match["medium"]),
        trial=int(match["trial"]),
    )


def format_footage_name(id: FootageId, extension: str = "") -> str:
    """Format a footage id as e.g. '01_F_T2', optionally with an extension."""
    return f"{id.case_number:02d}_{id.medium.value}_T{id.trial}{extension}"


@dataclass(frozen=True)
class RunPair:
    control: FootageId
    variable: FootageId
    expected: DefectSet


@dataclass(frozen=True)
class RunManifest:
    pairs: tuple[RunPair, ...]
    pairing_policy: PairingPolicy

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)


def build_run_manifest(
    cases: Iterable[int],
    trials: Iterable[int],
    policy: PairingPolicy = PairingPolicy.SAME_TRIAL,
) -> RunManifest:
    """Pair every (case, trial) frame with a control frame of case 1.

    With the same-trial policy, variable XX_F_Tt is compared to 01_F_Tt. With
    the shifted-trial policy it is compared to 01_F_T((t mod 5) + 1).

    Raises:
        ManifestError: if cases or trials are empty or out of range.
    """
    cases = sorted(set(cases))
    trials = sorted(set(trials))
    if not cases:
        raise ManifestError("No cases selected")
    if not trials:
        raise ManifestError("No trials selected")
    if not set(cases) <= set(range(1, NUM_CASES + 1)):
        raise ManifestError(f"Cases must be in 1..{NUM_CASES}, got {cases}")
    if not set(trials) <= set(range(1, NUM_TRIALS + 1)):
        raise ManifestError(f"Trials must be in 1..{NUM_TRIALS}, got {trials}")

    catalog = standard_test_cases()
    pairs = []
    for case in cases:
        for trial in trials:
            if policy is PairingPolicy.SAME_TRIAL:
                control_trial = trial
            else:
                control_trial = (trial % NUM_TRIALS) + 1
            pairs.append(
                RunPair(
                    control=FootageId(CONTROL_CASE, Medium.FRAME, control_trial),
                    variable=FootageId(case, Medium.FRAME, trial),
                    expected=catalog[case - 1].defects,
                )
            )
    return RunManifest(pairs=tuple(pairs), pairing_policy=policy)


def parse_number_range(text: str) -> list[int]:
    """Parse a selection like '1-15', '1,4,8' or '2-4,9' into sorted numbers.

    An empty string gives an empty list.
    """
    numbers = set()
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "-" in part:
            start, end = part.split("-", 1)
            numbers.update(range(int(start), int(end) + 1))
        else:
            numbers.add(int(part))
    return sorted(numbers)
