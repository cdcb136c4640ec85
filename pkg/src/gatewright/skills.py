"""Three-tier skill library: parsing, validation, and reading order.

A skill document is UTF-8 text with a YAML front-matter block (a line of
three dashes before and after, lowercase keys) followed by a free-form body.
Tier L3 is the single methodology document, L2 documents describe workflows
and cross-reference L3 principles plus the snake_case tools they consume,
and L1 documents wrap individual tools (declaring them under the same
`tools:` key so workflows can be traced to their backing documents).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from gatewright.errors import GatewrightError
from gatewright.naming import NameKind, classify_name, is_skill_name

TIERS = ("L1", "L2", "L3")
PRINCIPLE_RANGE = range(1, 26)
DOWNLOAD_CATEGORIES = ("A", "B", "C")

_STRUCTURED_KEYS = ("principles", "tools", "handoff")


class SkillError(GatewrightError):
    """Base for skill-document problems."""


class MissingHeader(SkillError):
    """No front-matter block, or a required key is absent."""


class InvalidTier(SkillError):
    """Declared tier is not one of L1/L2/L3."""


class MalformedName(SkillError):
    """Skill name violates the kebab-case grammar."""


class MalformedHandoff(SkillError):
    """A handoff entry is structurally broken."""


class UnknownWorkflow(SkillError):
    """Requested workflow does not name an L2 document."""


class MissingL3(SkillError):
    """The library has no methodology (L3) document."""


@dataclass(frozen=True)
class HandoffEntry:
    artifact_name: str
    file_format: str
    consumers: tuple[str, ...]
    download_category: str

    def __post_init__(self) -> None:
        if self.download_category not in DOWNLOAD_CATEGORIES:
            raise MalformedHandoff(
                f"download category must be one of {DOWNLOAD_CATEGORIES}, "
                f"got {self.download_category!r}")


@dataclass(frozen=True)
class SkillDocument:
    name: str
    tier: str
    metadata: dict[str, str] = field(default_factory=dict)
    body: str = ""
    referenced_principles: tuple[int, ...] = ()
    consumed_tools: tuple[str, ...] = ()
    handoff_contract: tuple[HandoffEntry, ...] = ()


@dataclass(frozen=True)
class Violation:
    document: str
    rule: str
    detail: str


@dataclass(frozen=True)
class LibraryReport:
    counts: dict[str, int]
    violations: tuple[Violation, ...]

    @property
    def valid(self) -> bool:
        return not self.violations


def _as_identifier_list(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return tuple(str(item) for item in value)


def _as_int_list(value) -> tuple[int, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        parts = [part.strip() for part in value.split(",") if part.strip()]
    elif isinstance(value, int):
        parts = [value]
    else:
        parts = list(value)
    return tuple(int(part) for part in parts)


def _as_handoff(value) -> tuple[HandoffEntry, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise MalformedHandoff("handoff must be a list of entries")
    entries = []
    for raw in value:
        if not isinstance(raw, dict):
            raise MalformedHandoff(f"handoff entry must be a mapping, got {raw!r}")
        try:
            entries.append(HandoffEntry(
                artifact_name=str(raw["artifact"]),
                file_format=str(raw["format"]),
                consumers=_as_identifier_list(raw.get("consumers")),
                download_category=str(raw["category"]),
            ))
        except KeyError as exc:
            raise MalformedHandoff(f"handoff entry missing key {exc}") from exc
    return tuple(entries)


def parse_skill_document(text: str) -> SkillDocument:
    """Parse front matter plus body into a SkillDocument."""
    if not text:
        raise MissingHeader("document is empty")
    lines = text.split("\n")
    if lines[0].strip() != "---":
        raise MissingHeader("document does not start with a front-matter block")
    try:
        closing = next(i for i in range(1, len(lines)) if lines[i].strip() == "---")
    except StopIteration:
        raise MissingHeader("front-matter block is not closed") from None

    header_text = "\n".join(lines[1:closing])
    body = "\n".join(lines[closing + 1:])
    try:
        header = yaml.safe_load(header_text)
    except yaml.YAMLError as exc:
        raise MissingHeader(f"front matter is not parseable: {exc}") from exc
    if not isinstance(header, dict):
        raise MissingHeader("front matter must be a key-value mapping")

    if "name" not in header or header["name"] is None:
        raise MissingHeader("header is missing the required `name` key")
    name = str(header["name"])
    if not is_skill_name(name) or classify_name(name) is NameKind.INVALID:
        raise MalformedName(f"skill name {name!r} violates the kebab-case grammar")

    tier = header.get("tier")
    if tier not in TIERS:
        raise InvalidTier(f"tier must be one of {TIERS}, got {tier!r}")

    metadata = {str(key): str(value) for key, value in header.items()
                if key not in _STRUCTURED_KEYS}
    return SkillDocument(
        name=name,
        tier=tier,
        metadata=metadata,
        body=body,
        referenced_principles=_as_int_list(header.get("principles")),
        consumed_tools=_as_identifier_list(header.get("tools")),
        handoff_contract=_as_handoff(header.get("handoff")),
    )


_LEADING_KEYS = ("name", "tier", "description", "license", "author")


def serialize_skill_document(doc: SkillDocument) -> str:
    """Inverse of parse: emits front matter then the body verbatim."""
    header: dict = {}
    for key in _LEADING_KEYS:
        if key in doc.metadata:
            header[key] = doc.metadata[key]
    header["name"] = doc.name
    header["tier"] = doc.tier
    for key in sorted(doc.metadata):
        if key not in header:
            header[key] = doc.metadata[key]
    if doc.referenced_principles:
        header["principles"] = list(doc.referenced_principles)
    if doc.consumed_tools:
        header["tools"] = list(doc.consumed_tools)
    if doc.handoff_contract:
        header["handoff"] = [
            {"artifact": entry.artifact_name,
             "format": entry.file_format,
             "consumers": list(entry.consumers),
             "category": entry.download_category}
            for entry in doc.handoff_contract
        ]
    front = yaml.safe_dump(header, sort_keys=False, default_flow_style=False)
    return f"---\n{front}---\n{doc.body}"


def validate_library(docs: list[SkillDocument]) -> LibraryReport:
    """Check library-wide rules; violations are reported, never raised."""
    counts = {tier: 0 for tier in TIERS}
    violations: list[Violation] = []
    seen: dict[str, int] = {}
    known_names = {doc.name for doc in docs}

    for doc in docs:
        counts[doc.tier] += 1
        seen[doc.name] = seen.get(doc.name, 0) + 1

    for name, copies in seen.items():
        if copies > 1:
            violations.append(Violation(name, "duplicate-name",
                                        f"{copies} documents share this name"))
    if counts["L3"] > 1:
        l3_names = sorted(doc.name for doc in docs if doc.tier == "L3")
        violations.append(Violation(",".join(l3_names), "l3-singleton",
                                    f"{counts['L3']} L3 documents, expected 1"))

    for doc in docs:
        if doc.tier == "L2":
            for tool in doc.consumed_tools:
                if classify_name(tool) is not NameKind.TOOL_NAME:
                    violations.append(Violation(
                        doc.name, "tool-name-grammar",
                        f"consumed tool {tool!r} is not snake_case"))
            for principle in doc.referenced_principles:
                if principle not in PRINCIPLE_RANGE:
                    violations.append(Violation(
                        doc.name, "principle-range",
                        f"principle {principle} outside 1..25"))
        if doc.tier == "L1" and doc.referenced_principles:
            violations.append(Violation(
                doc.name, "tier-restriction",
                "L1 documents must not reference principles"))
        if doc.tier == "L3" and doc.consumed_tools:
            violations.append(Violation(
                doc.name, "tier-restriction",
                "the L3 document must not declare tools"))
        for entry in doc.handoff_contract:
            for consumer in entry.consumers:
                if consumer not in known_names:
                    violations.append(Violation(
                        doc.name, "unknown-consumer",
                        f"handoff {entry.artifact_name!r} names unknown "
                        f"skill {consumer!r}"))

    ordered = tuple(sorted(violations,
                           key=lambda v: (v.document, v.rule, v.detail)))
    return LibraryReport(counts=counts, violations=ordered)


def resolve_reading_order(docs: list[SkillDocument], workflow: str) -> list[SkillDocument]:
    """Top-down order: [L3, the workflow, its consumed L1 docs in order]."""
    l3 = next((doc for doc in docs if doc.tier == "L3"), None)
    if l3 is None:
        raise MissingL3("library has no L3 methodology document")
    target = next((doc for doc in docs
                   if doc.tier == "L2" and doc.name == workflow), None)
    if target is None:
        raise UnknownWorkflow(f"no L2 document named {workflow!r}")

    order = [l3, target]
    for tool in target.consumed_tools:
        for doc in docs:
            if doc.tier == "L1" and tool in doc.consumed_tools and doc not in order:
                order.append(doc)
    return order


def load_library(directory: str | Path) -> list[SkillDocument]:
    """Parse every .md file under the directory, sorted by path."""
    directory = Path(directory)
    docs = []
    for path in sorted(directory.rglob("*.md")):
        docs.append(parse_skill_document(path.read_text(encoding="utf-8")))
    return docs
