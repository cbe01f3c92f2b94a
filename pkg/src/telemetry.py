"""SIEM telemetry: Windows-Event-shaped log synthesis, Green noise and observation windows"""
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape, quoteattr
import xml.etree.ElementTree as ET

import numpy as np

from src.exceptions import EncoderError
from src.logger import setup_logger
from src.schemas import EffectKind, ScenarioConfig, Team, ZoneName
import config

logger = setup_logger(__name__)

# ============================================
# EVENT IDS
# ============================================
EVENT_LOGON_SUCCESS = 4624
EVENT_LOGON_FAILURE = 4625
EVENT_FIREWALL_BLOCK = 5157
EVENT_HONEYTOKEN_TRIP = 4769

OUTCOME_SUCCESS = "success"
OUTCOME_FAILURE = "failure"
OUTCOME_NULLIFIED = "nullified"
OUTCOME_ABORTED = "aborted"
OUTCOME_TRIP = "trip"

# (effect kind, outcome) -> event id
EVENT_IDS: Dict[Tuple[str, str], int] = {
    (EffectKind.EXPLOIT.value, OUTCOME_SUCCESS): 4688,
    (EffectKind.EXPLOIT.value, OUTCOME_FAILURE): 4625,
    (EffectKind.CREDENTIAL_DUMP.value, OUTCOME_SUCCESS): 4656,
    (EffectKind.CREDENTIAL_DUMP.value, OUTCOME_FAILURE): 4673,
    (EffectKind.LATERAL_MOVE.value, OUTCOME_SUCCESS): 4624,
    (EffectKind.LATERAL_MOVE.value, OUTCOME_FAILURE): 4625,
    (EffectKind.PRIVILEGE_ESCALATION.value, OUTCOME_SUCCESS): 4672,
    (EffectKind.PRIVILEGE_ESCALATION.value, OUTCOME_FAILURE): 4673,
    (EffectKind.SCAN.value, OUTCOME_SUCCESS): 5156,
    (EffectKind.SCAN.value, OUTCOME_FAILURE): 5157,
    (EffectKind.IMPACT.value, OUTCOME_SUCCESS): 4663,
    (EffectKind.IMPACT.value, OUTCOME_FAILURE): 4656,
    (EffectKind.ISOLATE.value, OUTCOME_SUCCESS): 4946,
    (EffectKind.ISOLATE.value, OUTCOME_FAILURE): 4957,
    (EffectKind.RESTORE.value, OUTCOME_SUCCESS): 4948,
    (EffectKind.RESTORE.value, OUTCOME_FAILURE): 4957,
    (EffectKind.CLEANUP.value, OUTCOME_SUCCESS): 1117,
    (EffectKind.CLEANUP.value, OUTCOME_FAILURE): 1118,
    (EffectKind.TOKEN_ROTATE.value, OUTCOME_SUCCESS): 4724,
    (EffectKind.HONEYTOKEN.value, OUTCOME_SUCCESS): 4720,
    (EffectKind.HONEYTOKEN.value, OUTCOME_FAILURE): 4720,
    (EffectKind.PATCH.value, OUTCOME_SUCCESS): 19,
    (EffectKind.PATCH.value, OUTCOME_FAILURE): 20,
    (EffectKind.CREDENTIAL_RESET.value, OUTCOME_SUCCESS): 4723,
    (EffectKind.CREDENTIAL_RESET.value, OUTCOME_FAILURE): 4723,
    (EffectKind.MONITOR.value, OUTCOME_SUCCESS): 4719,
    ("Any", OUTCOME_NULLIFIED): EVENT_FIREWALL_BLOCK,
    ("Any", OUTCOME_ABORTED): EVENT_FIREWALL_BLOCK,
    (EffectKind.CREDENTIAL_DUMP.value, OUTCOME_TRIP): EVENT_HONEYTOKEN_TRIP,
}

BLUE_KINDS = frozenset({
    EffectKind.ISOLATE, EffectKind.RESTORE, EffectKind.CLEANUP, EffectKind.TOKEN_ROTATE,
    EffectKind.HONEYTOKEN, EffectKind.PATCH, EffectKind.CREDENTIAL_RESET, EffectKind.MONITOR,
})

# Process image per effect kind for action-driven records
KIND_PROCESS = {
    EffectKind.EXPLOIT: "C:\\Windows\\System32\\rundll32.exe",
    EffectKind.CREDENTIAL_DUMP: "C:\\Windows\\System32\\lsass.exe",
    EffectKind.LATERAL_MOVE: "C:\\Windows\\System32\\svchost.exe",
    EffectKind.PRIVILEGE_ESCALATION: "C:\\Windows\\System32\\spoolsv.exe",
    EffectKind.SCAN: "C:\\Windows\\Temp\\nbtscan.exe",
    EffectKind.IMPACT: "C:\\Windows\\System32\\schtasks.exe",
    EffectKind.ISOLATE: "C:\\Windows\\System32\\netsh.exe",
    EffectKind.RESTORE: "C:\\Windows\\System32\\netsh.exe",
    EffectKind.CLEANUP: "C:\\ProgramData\\Microsoft\\Windows Defender\\MsMpEng.exe",
    EffectKind.TOKEN_ROTATE: "C:\\Windows\\System32\\lsass.exe",
    EffectKind.HONEYTOKEN: "C:\\Windows\\System32\\dsac.exe",
    EffectKind.PATCH: "C:\\Windows\\System32\\wuauclt.exe",
    EffectKind.CREDENTIAL_RESET: "C:\\Windows\\System32\\net.exe",
    EffectKind.MONITOR: "C:\\Windows\\System32\\auditpol.exe",
}

STATUS_OK = "0x0"
STATUS_DENIED = "0xc0000022"
STATUS_BAD_PASSWORD = "0xc000006d"

# Benign pool: (event id, template name)
GREEN_TEMPLATES: List[Tuple[int, str]] = [
    (4624, "logon"),
    (4634, "logoff"),
    (4663, "file_access"),
    (4625, "typo_logon"),
    (5156, "connection"),
    (4688, "process"),
    (4672, "special_logon"),
]
GREEN_USERS = ["alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy"]
GREEN_PROCESSES = [
    "C:\\Program Files\\Microsoft Office\\OUTLOOK.EXE",
    "C:\\Windows\\explorer.exe",
    "C:\\Program Files\\Google\\Chrome\\chrome.exe",
    "C:\\Program Files\\Microsoft Office\\EXCEL.EXE",
    "C:\\Windows\\System32\\taskhostw.exe",
]
GREEN_FILES = [
    "\\\\fileserver\\finance\\q3_report.xlsx",
    "\\\\fileserver\\hr\\handbook.pdf",
    "C:\\Users\\Public\\Documents\\notes.txt",
    "\\\\fileserver\\eng\\design.docx",
    "C:\\Users\\Public\\Desktop\\decoy_passwords.txt",
]
GREEN_PORTS = ["443", "80", "445", "3389", "53"]


# ============================================
# RECORDS
# ============================================

@dataclass(frozen=True)
class LogDraft:
    """Unrendered log produced by an action outcome"""
    tick: float
    node: int
    zone: ZoneName
    event_id: int
    origin: Team
    computer: str
    fields: Tuple[Tuple[str, str], ...] = ()


@dataclass(slots=True)
class LogRecord:
    """A rendered SIEM record; origin is ground truth hidden from agents"""
    tick: float
    node: int
    zone: ZoneName
    event_id: int
    origin: Team
    computer: str = ""
    fields: Tuple[Tuple[str, str], ...] = ()
    raw: Optional[str] = None

    @property
    def xml_text(self) -> str:
        if self.raw is None:
            self.raw = render_event_xml(self.event_id, self.tick, self.computer, self.fields)
        return self.raw


def render_event_xml(event_id: int, tick: float, computer: str,
                     fields: Sequence[Tuple[str, str]]) -> str:
    """Minimal Windows-Event XML; tag order is fixed for encoder stability"""
    data = "".join(
        f"<Data Name={quoteattr(name)}>{escape(value)}</Data>" for name, value in fields
    )
    return (
        f"<Event><System><EventID>{event_id}</EventID>"
        f"<TimeCreated SystemTime=\"{tick:.3f}\"/>"
        f"<Computer>{escape(computer)}</Computer></System>"
        f"<EventData>{data}</EventData></Event>"
    )


def synthesize_log(draft: LogDraft) -> LogRecord:
    """Render a draft into a record; same draft gives byte-identical xml_text"""
    record = LogRecord(
        tick=draft.tick,
        node=draft.node,
        zone=draft.zone,
        event_id=draft.event_id,
        origin=draft.origin,
        computer=draft.computer,
        fields=draft.fields,
    )
    record.raw = render_event_xml(draft.event_id, draft.tick, draft.computer, draft.fields)
    return record


def parse_event_id(xml_text: str) -> int:
    """EventID of a raw record, 0 when the text is not Event XML"""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError:
        return 0
    elem = root.find("System/EventID")
    if elem is None or not (elem.text or "").strip().isdigit():
        return 0
    return int(elem.text.strip())


def outcome_draft(kind: EffectKind, outcome: str, *, tick: float, node: int, zone: ZoneName,
                  computer: str, origin: Team, action_name: str = "",
                  address: str = "", service: str = "") -> LogDraft:
    """Template expansion keyed by (effect kind, outcome)"""
    if outcome in (OUTCOME_NULLIFIED, OUTCOME_ABORTED):
        event_id = EVENT_IDS[("Any", outcome)]
    else:
        event_id = EVENT_IDS.get((kind.value, outcome))
        if event_id is None:
            event_id = EVENT_IDS[(kind.value, OUTCOME_SUCCESS)]

    failed = outcome != OUTCOME_SUCCESS and outcome != OUTCOME_TRIP
    if event_id == EVENT_LOGON_FAILURE:
        status = STATUS_BAD_PASSWORD
    else:
        status = STATUS_DENIED if failed else STATUS_OK

    fields: List[Tuple[str, str]] = [
        ("SubjectUserName", "SYSTEM" if origin == Team.BLUE else "svc_backup"),
        ("ProcessName", KIND_PROCESS.get(kind, "C:\\Windows\\System32\\svchost.exe")),
        ("IpAddress", address or "-"),
        ("Status", status),
    ]
    if service:
        fields.append(("ServiceName", service))
    if kind == EffectKind.LATERAL_MOVE:
        fields.append(("LogonType", "3"))
        fields.append(("AuthenticationPackageName", "Kerberos"))
    if outcome == OUTCOME_TRIP:
        fields.append(("TicketEncryptionType", "0x17"))
        fields.append(("TargetUserName", "svc_decoy"))
    if outcome in (OUTCOME_NULLIFIED, OUTCOME_ABORTED):
        fields.append(("FilterRTID", "0"))
        fields.append(("LayerName", "%%14610"))
    if origin == Team.BLUE and action_name:
        fields.append(("Operation", action_name))

    return LogDraft(
        tick=tick,
        node=node,
        zone=zone,
        event_id=event_id,
        origin=origin,
        computer=computer,
        fields=tuple(fields),
    )


# ============================================
# GREEN NOISE
# ============================================

@dataclass(frozen=True)
class GreenProfile:
    """Diurnal intensity: lam_day inside [day_start, day_end) of each day, else lam_night"""
    lam_day: float = config.GREEN_LAMBDA_DAY
    lam_night: float = config.GREEN_LAMBDA_NIGHT
    day_start: int = config.DAY_START_HOUR
    day_end: int = config.DAY_END_HOUR
    day_length: int = config.DAY_LENGTH

    @classmethod
    def from_scenario(cls, scenario: ScenarioConfig) -> "GreenProfile":
        if not scenario.green_enabled:
            return cls(lam_day=0.0, lam_night=0.0)
        return cls(
            lam_day=scenario.green_lambda_day,
            lam_night=scenario.green_lambda_night,
            day_start=scenario.day_start_hour,
            day_end=scenario.day_end_hour,
        )

    def intensity(self, t: float) -> float:
        hour = int(np.floor(t)) % self.day_length
        return self.lam_day if self.day_start <= hour < self.day_end else self.lam_night

    @property
    def peak(self) -> float:
        return max(self.lam_day, self.lam_night)


@dataclass(frozen=True)
class Host:
    node: int
    name: str
    zone: ZoneName
    address: str = "-"


DEFAULT_HOSTS = (Host(node=0, name="WS-00", zone=ZoneName.CORPORATE),)


def green_template_fields(template: str, rng: np.random.Generator,
                          address: str) -> Tuple[Tuple[str, str], ...]:
    user = GREEN_USERS[int(rng.integers(len(GREEN_USERS)))]
    if template in ("logon", "logoff", "special_logon"):
        return (
            ("TargetUserName", user),
            ("LogonType", "2" if template == "logon" else "3"),
            ("IpAddress", address),
            ("Status", STATUS_OK),
        )
    if template == "typo_logon":
        return (
            ("TargetUserName", user),
            ("LogonType", "2"),
            ("IpAddress", address),
            ("Status", STATUS_BAD_PASSWORD),
        )
    if template == "file_access":
        return (
            ("SubjectUserName", user),
            ("ObjectName", GREEN_FILES[int(rng.integers(len(GREEN_FILES)))]),
            ("AccessMask", "0x1"),
        )
    if template == "connection":
        return (
            ("Application", GREEN_PROCESSES[int(rng.integers(len(GREEN_PROCESSES)))]),
            ("DestPort", GREEN_PORTS[int(rng.integers(len(GREEN_PORTS)))]),
            ("SourceAddress", address),
        )
    return (
        ("SubjectUserName", user),
        ("NewProcessName", GREEN_PROCESSES[int(rng.integers(len(GREEN_PROCESSES)))]),
        ("Status", STATUS_OK),
    )


def green_noise(t0: float, t1: float, rng: np.random.Generator,
                profile: Optional[GreenProfile] = None,
                hosts: Sequence[Host] = DEFAULT_HOSTS) -> List[LogRecord]:
    """Benign records over (t0, t1] from a non-homogeneous Poisson process

    Candidates are drawn at the peak rate with uniform times and thinned
    with acceptance probability lambda(t) / peak.
    """
    profile = profile or GreenProfile()
    if t1 <= t0 or profile.peak <= 0.0 or not hosts:
        return []

    count = int(rng.poisson(profile.peak * (t1 - t0)))
    if count == 0:
        return []
    times = np.sort(rng.uniform(t0, t1, size=count))
    accept = rng.random(count)

    records = []
    for t, u in zip(times, accept):
        t = float(t)
        if u * profile.peak > profile.intensity(t):
            continue
        host = hosts[int(rng.integers(len(hosts)))]
        event_id, template = GREEN_TEMPLATES[int(rng.integers(len(GREEN_TEMPLATES)))]
        records.append(LogRecord(
            tick=t,
            node=host.node,
            zone=host.zone,
            event_id=event_id,
            origin=Team.GREEN,
            computer=host.name,
            fields=green_template_fields(template, rng, host.address),
        ))
    return records


# ============================================
# SEED CORPUS
# ============================================

def corpus_templates() -> List[Tuple[str, str]]:
    """Every (effect kind, outcome) pair with a log template plus the Green pool"""
    pairs = [key for key in EVENT_IDS if key[0] != "Any"]
    pairs.append(("Any", OUTCOME_NULLIFIED))
    pairs.append(("Any", OUTCOME_ABORTED))
    pairs.extend(("Green", name) for _, name in GREEN_TEMPLATES)
    return pairs


def generate_seed_corpus(scenario: ScenarioConfig, rng: np.random.Generator,
                         size: int = config.SEED_CORPUS_SIZE) -> List[LogRecord]:
    """Encoder-fitting corpus covering every template round-robin

    Raises:
        EncoderError: size below ten records per template
    """
    templates = corpus_templates()
    minimum = 10 * len(templates)
    if size < minimum:
        raise EncoderError(
            f"Seed corpus size {size} is too small; need at least {minimum} "
            f"({len(templates)} templates x 10)"
        )

    hosts = []
    members: Dict[ZoneName, int] = {}
    for spec in scenario.nodes:
        idx = members.get(spec.zone, 0)
        members[spec.zone] = idx + 1
        cidr = next((z.cidr for z in scenario.zones if z.name == spec.zone), "10.0.0.0/24")
        base = cidr.split("/")[0].rsplit(".", 1)[0]
        services = [s.name for s in spec.services] or ["-"]
        hosts.append((Host(node=spec.id, name=spec.name, zone=spec.zone,
                           address=f"{base}.{10 + idx}"), services))

    corpus: List[LogRecord] = []
    for i in range(size):
        kind_name, outcome = templates[i % len(templates)]
        host, services = hosts[int(rng.integers(len(hosts)))]
        tick = float(np.round(rng.uniform(0.0, config.DEFAULT_HORIZON), 3))

        if kind_name == "Green":
            event_id = next(eid for eid, name in GREEN_TEMPLATES if name == outcome)
            corpus.append(synthesize_log(LogDraft(
                tick=tick, node=host.node, zone=host.zone, event_id=event_id,
                origin=Team.GREEN, computer=host.name,
                fields=green_template_fields(outcome, rng, host.address),
            )))
            continue

        kind = EffectKind.EXPLOIT if kind_name == "Any" else EffectKind(kind_name)
        origin = Team.BLUE if kind in BLUE_KINDS else Team.RED
        corpus.append(synthesize_log(outcome_draft(
            kind, outcome, tick=tick, node=host.node, zone=host.zone,
            computer=host.name, origin=origin,
            address=host.address,
            service=services[int(rng.integers(len(services)))],
        )))

    logger.info(f"Generated seed corpus: {len(corpus)} records over {len(templates)} templates")
    return corpus


# ============================================
# OBSERVATION WINDOWS
# ============================================

class ObservationWindow:
    """Last WINDOW_SIZE records of one zone (or node), encoded on demand"""

    def __init__(self, zone: Optional[ZoneName] = None, encoder=None,
                 capacity: int = config.WINDOW_SIZE):
        self.zone = zone
        self.encoder = encoder
        self.capacity = capacity
        self.items: Deque[Union[LogRecord, np.ndarray]] = deque(maxlen=capacity)

    def push(self, item: Union[LogRecord, np.ndarray]) -> None:
        self.items.append(item)

    def __len__(self):
        return len(self.items)

    def embeddings(self) -> List[np.ndarray]:
        out = []
        for item in self.items:
            if isinstance(item, LogRecord):
                if self.encoder is None:
                    raise EncoderError("Window holds raw records but has no encoder")
                out.append(self.encoder.encode(item.xml_text))
            else:
                out.append(np.asarray(item, dtype=np.float64))
        return out


def build_observation(window: ObservationWindow) -> np.ndarray:
    """Mean over the full capacity; unfilled slots count as zero vectors"""
    total = np.zeros(config.EMBEDDING_DIMENSION, dtype=np.float64)
    for emb in window.embeddings():
        total += emb
    return total / window.capacity
