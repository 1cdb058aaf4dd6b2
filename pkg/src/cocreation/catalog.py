"""The machine-readable NaaS body of knowledge: products, specs, rules, prices.

A catalog is an immutable graph: commercial product offerings point at
product specifications, which decompose through policy rules into service
and finally resource specifications grouped by network domain. Every
lookup operation here is a pure function of (catalog, inputs), and
resolution is deliberately exact: a reference that is not literally in the
catalog never resolves, which is what makes fabricated products countable.

Catalog documents are JSON with top-level keys ``version``, ``offerings``,
``specs`` and ``rules``; unit costs are whole euros in the file and integer
cents in memory. See docs/formats.md for the schema.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import Ambiguous, IntegrityError, InvalidDuration, NotFound, ParseError

BILLING_PER_DAY = "PerDay"
BILLING_ONCE = "Once"
LAYERS = ("Product", "Service", "Resource")


@dataclass(frozen=True)
class ProductOffering:
    id: str
    name: str
    tier: str | None
    parameter_names: tuple[str, ...]
    unit_cost_cents: int
    billing: str
    product_spec_id: str

    def display_name(self) -> str:
        return f"{self.name} ({self.tier})" if self.tier else self.name


@dataclass(frozen=True)
class Characteristic:
    name: str
    value_type: str = "string"
    allowed_values: tuple[str, ...] = ()


@dataclass(frozen=True)
class SpecNode:
    """One Product/Service/Resource specification node."""

    id: str
    name: str
    layer: str
    characteristics: tuple[Characteristic, ...] = ()
    domain: str | None = None  # Resource layer only


@dataclass(frozen=True)
class RuleCondition:
    """Predicate over a named characteristic: eq / ne / in / gte / lte."""

    characteristic: str
    op: str
    value: object = None
    values: tuple[str, ...] = ()

    def holds(self, context: Mapping[str, object]) -> bool:
        actual = context.get(self.characteristic)
        if actual is None:
            return False
        if self.op == "eq":
            return actual == self.value
        if self.op == "ne":
            return actual != self.value
        if self.op == "in":
            return actual in self.values
        if self.op == "gte":
            return float(actual) >= float(self.value)  # type: ignore[arg-type]
        if self.op == "lte":
            return float(actual) <= float(self.value)  # type: ignore[arg-type]
        raise ParseError(f"unknown condition op {self.op!r}")


@dataclass(frozen=True)
class PolicyRule:
    id: str
    from_spec_id: str
    to_spec_id: str
    condition: RuleCondition | None = None
    note: str = ""


@dataclass(frozen=True)
class Catalog:
    version: str
    offerings: tuple[ProductOffering, ...]
    specs: tuple[SpecNode, ...]
    rules: tuple[PolicyRule, ...]

    def offering_by_id(self, offering_id: str) -> ProductOffering | None:
        return self._offering_index().get(offering_id)

    def spec_by_id(self, spec_id: str) -> SpecNode | None:
        return self._spec_index().get(spec_id)

    def rules_from(self, spec_id: str) -> tuple[PolicyRule, ...]:
        return tuple(
            sorted(
                (r for r in self.rules if r.from_spec_id == spec_id),
                key=lambda r: r.id,
            )
        )

    def tiers_for(self, name: str) -> list[ProductOffering]:
        low = name.casefold()
        return sorted(
            (o for o in self.offerings if o.name.casefold() == low),
            key=lambda o: (o.unit_cost_cents, o.id),
        )

    def lower_layer_names(self) -> tuple[str, ...]:
        """Service- and resource-layer spec names (the R5 lexicon)."""
        return tuple(
            s.name for s in self.specs if s.layer in ("Service", "Resource")
        )

    # index caches; the dataclass is frozen so object.__setattr__ is the
    # sanctioned way to memoize
    def _offering_index(self) -> dict[str, ProductOffering]:
        cached = self.__dict__.get("_off_idx")
        if cached is None:
            cached = {o.id: o for o in self.offerings}
            object.__setattr__(self, "_off_idx", cached)
        return cached

    def _spec_index(self) -> dict[str, SpecNode]:
        cached = self.__dict__.get("_spec_idx")
        if cached is None:
            cached = {s.id: s for s in self.specs}
            object.__setattr__(self, "_spec_idx", cached)
        return cached


@dataclass(frozen=True)
class QuoteLine:
    offering_id: str
    unit_cost_cents: int
    billing: str
    charged_units: int
    line_total_cents: int


@dataclass(frozen=True)
class CostQuote:
    line_items: tuple[QuoteLine, ...]
    total_cents: int
    duration_days: int
    within_budget: bool | None = None

    def as_dict(self) -> dict:
        return {
            "lineItems": [
                {
                    "offeringId": li.offering_id,
                    "unitCostCents": li.unit_cost_cents,
                    "billing": li.billing,
                    "chargedUnits": li.charged_units,
                    "lineTotalCents": li.line_total_cents,
                }
                for li in self.line_items
            ],
            "totalCostCents": self.total_cents,
            "durationDays": self.duration_days,
            "withinBudget": self.within_budget,
        }


@dataclass(frozen=True)
class ResourceLeaf:
    spec_id: str
    name: str
    domain: str
    via_rule: str


@dataclass(frozen=True)
class ServiceBranch:
    spec_id: str
    name: str
    via_rule: str
    resources: tuple[ResourceLeaf, ...]


@dataclass(frozen=True)
class DecompositionTree:
    offering_id: str
    product_spec_id: str
    services: tuple[ServiceBranch, ...]
    incomplete: bool

    def resources_by_domain(self) -> dict[str, list[ResourceLeaf]]:
        grouped: dict[str, list[ResourceLeaf]] = {}
        for svc in self.services:
            for leaf in svc.resources:
                grouped.setdefault(leaf.domain, []).append(leaf)
        return dict(sorted(grouped.items()))

    def as_dict(self) -> dict:
        return {
            "offeringId": self.offering_id,
            "productSpecId": self.product_spec_id,
            "incomplete": self.incomplete,
            "services": [
                {
                    "specId": s.spec_id,
                    "name": s.name,
                    "viaRule": s.via_rule,
                    "resources": [
                        {
                            "specId": r.spec_id,
                            "name": r.name,
                            "domain": r.domain,
                            "viaRule": r.via_rule,
                        }
                        for r in s.resources
                    ],
                }
                for s in self.services
            ],
            "domains": {
                dom: [leaf.spec_id for leaf in leaves]
                for dom, leaves in self.resources_by_domain().items()
            },
        }


@dataclass(frozen=True)
class ItemFinding:
    reference: str
    resolved_id: str | None
    missing_parameters: tuple[str, ...]

    @property
    def resolved(self) -> bool:
        return self.resolved_id is not None


@dataclass(frozen=True)
class ValidationReport:
    items: tuple[ItemFinding, ...]
    valid: bool

    def unresolved(self) -> list[ItemFinding]:
        return [f for f in self.items if not f.resolved]

    def as_dict(self) -> dict:
        return {
            "valid": self.valid,
            "items": [
                {
                    "reference": f.reference,
                    "resolvedId": f.resolved_id,
                    "missingParameters": list(f.missing_parameters),
                }
                for f in self.items
            ],
        }


@dataclass(frozen=True)
class ConstraintSet:
    """Search constraints: keywords plus optional cost/parameter filters."""

    keywords: tuple[str, ...] = ()
    max_daily_cost_cents: int | None = None
    required_parameters: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# loading & integrity
# ---------------------------------------------------------------------------

_REQUIRED_TOP = ("version", "offerings", "specs", "rules")


def load_catalog(source: str | Path | dict) -> Catalog:
    """Load and validate a catalog document.

    Accepts a path, a JSON string, or an already-parsed dict. Raises
    ParseError for malformed documents and IntegrityError (naming the
    offending id) for dangling references, cycles, or offerings with no
    resource path.
    """
    doc = _read_document(source)
    for key in _REQUIRED_TOP:
        if key not in doc:
            raise ParseError(f"catalog document missing key {key!r}")

    specs = tuple(_parse_spec(raw) for raw in doc["specs"])
    offerings = tuple(_parse_offering(raw) for raw in doc["offerings"])
    rules = tuple(_parse_rule(raw) for raw in doc["rules"])
    catalog = Catalog(
        version=str(doc["version"]),
        offerings=offerings,
        specs=specs,
        rules=rules,
    )
    _check_integrity(catalog)
    return catalog


def _read_document(source: str | Path | dict) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or (
        isinstance(source, str) and not source.lstrip().startswith("{")
    ):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read catalog: {exc}") from exc
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("catalog document must be a JSON object")
    return doc


def _parse_offering(raw: dict) -> ProductOffering:
    try:
        billing = raw["billing"]
        if billing not in (BILLING_PER_DAY, BILLING_ONCE):
            raise ParseError(f"offering {raw.get('id')!r}: bad billing {billing!r}")
        euros = raw["unitCost"]
        if not isinstance(euros, int) or euros < 0:
            raise ParseError(
                f"offering {raw.get('id')!r}: unitCost must be a non-negative "
                f"whole-euro integer"
            )
        return ProductOffering(
            id=str(raw["id"]),
            name=str(raw["name"]),
            tier=raw.get("tier"),
            parameter_names=tuple(raw.get("parameterNames", [])),
            unit_cost_cents=euros * 100,
            billing=billing,
            product_spec_id=str(raw["productSpecId"]),
        )
    except KeyError as exc:
        raise ParseError(f"offering missing field {exc}") from exc


def _parse_spec(raw: dict) -> SpecNode:
    try:
        layer = raw["layer"]
        if layer not in LAYERS:
            raise ParseError(f"spec {raw.get('id')!r}: bad layer {layer!r}")
        chars = tuple(
            Characteristic(
                name=str(c["name"]),
                value_type=str(c.get("valueType", "string")),
                allowed_values=tuple(c.get("allowedValues", [])),
            )
            for c in raw.get("characteristics", [])
        )
        return SpecNode(
            id=str(raw["id"]),
            name=str(raw["name"]),
            layer=layer,
            characteristics=chars,
            domain=raw.get("domain"),
        )
    except KeyError as exc:
        raise ParseError(f"spec missing field {exc}") from exc


def _parse_rule(raw: dict) -> PolicyRule:
    try:
        cond = None
        if raw.get("condition"):
            c = raw["condition"]
            cond = RuleCondition(
                characteristic=str(c["characteristic"]),
                op=str(c["op"]),
                value=c.get("value"),
                values=tuple(c.get("values", [])),
            )
        return PolicyRule(
            id=str(raw["id"]),
            from_spec_id=str(raw["fromSpecId"]),
            to_spec_id=str(raw["toSpecId"]),
            condition=cond,
            note=str(raw.get("note", "")),
        )
    except KeyError as exc:
        raise ParseError(f"rule missing field {exc}") from exc


def _check_integrity(catalog: Catalog) -> None:
    spec_ids = {s.id for s in catalog.specs}
    seen_pairs: set[tuple[str, str | None]] = set()
    layer_rank = {layer: i for i, layer in enumerate(LAYERS)}

    for off in catalog.offerings:
        key = (off.name.casefold(), off.tier)
        if key in seen_pairs:
            raise IntegrityError(
                f"duplicate offering (name, tier): {off.name!r}/{off.tier!r}",
                offending_id=off.id,
            )
        seen_pairs.add(key)
        if off.product_spec_id not in spec_ids:
            raise IntegrityError(
                f"offering {off.id!r} references missing spec "
                f"{off.product_spec_id!r}",
                offending_id=off.product_spec_id,
            )
        target = catalog.spec_by_id(off.product_spec_id)
        if target and target.layer != "Product":
            raise IntegrityError(
                f"offering {off.id!r} must point at a Product spec",
                offending_id=off.product_spec_id,
            )

    for spec in catalog.specs:
        if spec.layer == "Resource" and not spec.domain:
            raise IntegrityError(
                f"resource spec {spec.id!r} lacks a domain label",
                offending_id=spec.id,
            )

    for rule in catalog.rules:
        for ref in (rule.from_spec_id, rule.to_spec_id):
            if ref not in spec_ids:
                raise IntegrityError(
                    f"rule {rule.id!r} references missing spec {ref!r}",
                    offending_id=ref,
                )
        src = catalog.spec_by_id(rule.from_spec_id)
        dst = catalog.spec_by_id(rule.to_spec_id)
        assert src and dst
        if layer_rank[src.layer] >= layer_rank[dst.layer]:
            raise IntegrityError(
                f"rule {rule.id!r} does not descend Product->Service->Resource",
                offending_id=rule.id,
            )

    _check_acyclic(catalog)

    # every offering must reach at least one resource spec through the rule
    # graph (conditions ignored here; a conditioned-out decomposition is a
    # runtime concern, not a structural one)
    for off in catalog.offerings:
        if not _reaches_resource(catalog, off.product_spec_id):
            raise IntegrityError(
                f"offering {off.id!r} decomposes to no resource spec",
                offending_id=off.id,
            )


def _check_acyclic(catalog: Catalog) -> None:
    # layer ordering already forbids cycles across layers; this guards
    # against duplicate-id tricks and same-node self-edges
    adjacency: dict[str, list[str]] = {}
    for rule in catalog.rules:
        adjacency.setdefault(rule.from_spec_id, []).append(rule.to_spec_id)
    visiting: set[str] = set()
    done: set[str] = set()

    def visit(node: str) -> None:
        if node in done:
            return
        if node in visiting:
            raise IntegrityError(
                f"cycle through spec {node!r}", offending_id=node
            )
        visiting.add(node)
        for nxt in adjacency.get(node, []):
            visit(nxt)
        visiting.discard(node)
        done.add(node)

    for spec in catalog.specs:
        visit(spec.id)


def _reaches_resource(catalog: Catalog, spec_id: str) -> bool:
    node = catalog.spec_by_id(spec_id)
    if node is None:
        return False
    if node.layer == "Resource":
        return True
    return any(
        _reaches_resource(catalog, rule.to_spec_id)
        for rule in catalog.rules_from(spec_id)
    )


# ---------------------------------------------------------------------------
# lookup operations
# ---------------------------------------------------------------------------

def resolve_offering(
    catalog: Catalog, ref: str | dict | tuple
) -> ProductOffering:
    """Resolve an offering by id or exact (name, tier). No fuzzy matching.

    A tierless reference resolves only if the name has a single tier (or a
    tierless offering). Raises NotFound / Ambiguous otherwise; this is the
    oracle that makes fabricated products detectable.
    """
    name, tier = _normalize_ref(ref)
    if name is None:
        raise NotFound(ref)

    by_id = catalog.offering_by_id(name)
    if by_id is not None and tier is None:
        return by_id

    name_cf = name.casefold()
    tier_cf = tier.casefold() if tier else None
    candidates = [o for o in catalog.offerings if o.name.casefold() == name_cf]
    if not candidates:
        raise NotFound(ref)
    if tier_cf is not None:
        for off in candidates:
            if off.tier and off.tier.casefold() == tier_cf:
                return off
        raise NotFound(ref)
    tierless = [o for o in candidates if o.tier is None]
    if len(tierless) == 1:
        return tierless[0]
    if len(candidates) == 1:
        return candidates[0]
    raise Ambiguous(name, [o.tier or "" for o in candidates])


def _normalize_ref(ref) -> tuple[str | None, str | None]:
    if isinstance(ref, str):
        return ref, None
    if isinstance(ref, dict):
        name = ref.get("name") or ref.get("id")
        return (str(name) if name else None), ref.get("tier")
    if isinstance(ref, (tuple, list)) and ref:
        name = ref[0]
        tier = ref[1] if len(ref) > 1 else None
        return (str(name) if name else None), tier
    return None, None


_TOKEN_SPLIT = re.compile(r"[^0-9a-z-]+")


def _offering_tokens(off: ProductOffering) -> tuple[str, ...]:
    text = off.name + (f" {off.tier}" if off.tier else "")
    return tuple(t for t in _TOKEN_SPLIT.split(text.casefold()) if t)


def search_offerings(
    catalog: Catalog, query: ConstraintSet | None = None
) -> list[ProductOffering]:
    """Rank offerings by keyword-token overlap ratio, then cost, then id.

    With keywords, zero-overlap offerings are excluded; without, every
    offering matches (ratio 0) and the ordering degenerates to cost/id.
    """
    query = query or ConstraintSet()
    kw = {k.casefold() for k in query.keywords}
    ranked: list[tuple[float, int, str, ProductOffering]] = []
    for off in catalog.offerings:
        if query.max_daily_cost_cents is not None:
            daily = off.unit_cost_cents if off.billing == BILLING_PER_DAY else 0
            if daily > query.max_daily_cost_cents:
                continue
        if query.required_parameters and not set(query.required_parameters) <= set(
            off.parameter_names
        ):
            continue
        tokens = _offering_tokens(off)
        overlap = len(kw & set(tokens))
        if kw and overlap == 0:
            continue
        ratio = overlap / len(tokens) if tokens else 0.0
        ranked.append((-ratio, off.unit_cost_cents, off.id, off))
    ranked.sort(key=lambda row: row[:3])
    return [row[3] for row in ranked]


def decompose_offering(catalog: Catalog, offering_id: str) -> DecompositionTree:
    """Expand an offering through the policy-rule graph down to resources.

    Rules whose condition fails against the offering context (currently its
    tier) do not fire; unconditioned rules always fire. Traversal order is
    rule id ascending, so the tree is deterministic.
    """
    offering = catalog.offering_by_id(offering_id)
    if offering is None:
        raise NotFound(offering_id)
    context = {"tier": offering.tier}

    services: list[ServiceBranch] = []
    for rule in catalog.rules_from(offering.product_spec_id):
        if rule.condition and not rule.condition.holds(context):
            continue
        svc = catalog.spec_by_id(rule.to_spec_id)
        assert svc is not None
        leaves: list[ResourceLeaf] = []
        for sub in catalog.rules_from(svc.id):
            if sub.condition and not sub.condition.holds(context):
                continue
            res = catalog.spec_by_id(sub.to_spec_id)
            assert res is not None
            leaves.append(
                ResourceLeaf(
                    spec_id=res.id,
                    name=res.name,
                    domain=res.domain or "",
                    via_rule=sub.id,
                )
            )
        services.append(
            ServiceBranch(
                spec_id=svc.id,
                name=svc.name,
                via_rule=rule.id,
                resources=tuple(leaves),
            )
        )
    incomplete = not services or all(not s.resources for s in services)
    return DecompositionTree(
        offering_id=offering.id,
        product_spec_id=offering.product_spec_id,
        services=tuple(services),
        incomplete=incomplete,
    )


def validate_bundle(
    catalog: Catalog,
    items: list,
    provided_parameters: Mapping[str, object] | None = None,
) -> ValidationReport:
    """Resolve each item and check its required order parameters."""
    provided = provided_parameters or {}
    findings: list[ItemFinding] = []
    for item in items:
        try:
            off = resolve_offering(catalog, item)
        except (NotFound, Ambiguous):
            findings.append(
                ItemFinding(
                    reference=_ref_repr(item), resolved_id=None,
                    missing_parameters=(),
                )
            )
            continue
        missing = tuple(
            p for p in off.parameter_names
            if provided.get(p) in (None, "")
        )
        findings.append(
            ItemFinding(
                reference=_ref_repr(item), resolved_id=off.id,
                missing_parameters=missing,
            )
        )
    valid = all(f.resolved and not f.missing_parameters for f in findings)
    return ValidationReport(items=tuple(findings), valid=valid)


def _ref_repr(ref) -> str:
    name, tier = _normalize_ref(ref)
    if name is None:
        return repr(ref)
    return f"{name} ({tier})" if tier else name


def quote(
    catalog: Catalog,
    items: list[str],
    duration_days: int,
    budget_cents: int | None = None,
) -> CostQuote:
    """Price a bundle: PerDay lines scale with duration, Once lines do not."""
    if duration_days < 1:
        raise InvalidDuration(f"durationDays must be >= 1, got {duration_days}")
    lines: list[QuoteLine] = []
    for item in items:
        off = resolve_offering(catalog, item)
        units = duration_days if off.billing == BILLING_PER_DAY else 1
        lines.append(
            QuoteLine(
                offering_id=off.id,
                unit_cost_cents=off.unit_cost_cents,
                billing=off.billing,
                charged_units=units,
                line_total_cents=off.unit_cost_cents * units,
            )
        )
    total = sum(li.line_total_cents for li in lines)
    within = None if budget_cents is None else total <= budget_cents
    return CostQuote(
        line_items=tuple(lines),
        total_cents=total,
        duration_days=duration_days,
        within_budget=within,
    )
