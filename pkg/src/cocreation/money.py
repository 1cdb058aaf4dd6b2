"""Euro amounts as integer cents, plus the deterministic text extractors.

All engine arithmetic happens in cents so budget comparisons are exact.
The extractors here are the engine-side authority for explicit numerals in
user text: whatever a backend claims, an explicit "9,000€" or "one week"
in the goal text wins.
"""

from __future__ import annotations

import re

# number (with optional thousands separators / decimals) followed by a
# currency marker, or preceded by the euro sign
_CURRENCY_AFTER = re.compile(
    r"(?<![\w.,])([0-9][0-9.,]*)\s*(?:€|eur\b|euros?\b)", re.IGNORECASE
)
_CURRENCY_BEFORE = re.compile(r"€\s*([0-9][0-9.,]*)")

_BUDGET_HINT = re.compile(r"budget|cost|price|spend|total", re.IGNORECASE)

_WORD_NUMBERS = {
    "a": 1, "an": 1, "one": 1, "two": 2, "three": 3, "four": 4,
    "five": 5, "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}

_DURATION = re.compile(
    r"\b(?:(\d+)|(" + "|".join(_WORD_NUMBERS) + r"))[\s-]*(week|day)s?\b",
    re.IGNORECASE,
)


def parse_amount_cents(token: str) -> int:
    """Parse a human-written euro amount like ``9,000`` or ``7800.50``.

    Commas followed by exactly three digits are thousands separators; a
    trailing ``.`` or ``,`` group of one or two digits is a decimal part.
    """
    token = token.strip().rstrip(".,")
    # unify: detect decimal part first
    m = re.fullmatch(r"(\d[\d.,]*?)[.,](\d{1,2})", token)
    decimals = 0
    if m and not re.fullmatch(r"\d{1,3}(?:[.,]\d{3})+", token):
        whole_part, dec = m.group(1), m.group(2)
        decimals = int(dec.ljust(2, "0"))
        token = whole_part
    digits = re.sub(r"[.,]", "", token)
    if not digits.isdigit():
        raise ValueError(f"not an amount: {token!r}")
    return int(digits) * 100 + decimals


def format_euros(cents: int) -> str:
    """Render cents as a display string, e.g. ``7,800€`` or ``7,800.50€``."""
    euros, rem = divmod(abs(cents), 100)
    sign = "-" if cents < 0 else ""
    whole = f"{euros:,}"
    if rem:
        return f"{sign}{whole}.{rem:02d}€"
    return f"{sign}{whole}€"


def money_mentions_cents(text: str) -> list[int]:
    """All currency-tagged amounts in ``text``, in order of appearance."""
    hits: list[tuple[int, int]] = []
    for m in _CURRENCY_AFTER.finditer(text):
        hits.append((m.start(), parse_amount_cents(m.group(1))))
    for m in _CURRENCY_BEFORE.finditer(text):
        hits.append((m.start(), parse_amount_cents(m.group(1))))
    hits.sort(key=lambda pair: pair[0])
    return [cents for _, cents in hits]


def last_stated_total_cents(text: str) -> int | None:
    """The last currency-tagged number in ``text``, or None."""
    mentions = money_mentions_cents(text)
    return mentions[-1] if mentions else None


def extract_budget_cents(text: str) -> int | None:
    """Budget stated in free text, if any.

    Prefers amounts in sentences that carry a budget/cost hint; falls back
    to the first currency mention otherwise.
    """
    mentions = money_mentions_cents(text)
    if not mentions:
        return None
    for sentence in re.split(r"[.;\n]", text):
        if _BUDGET_HINT.search(sentence):
            in_sentence = money_mentions_cents(sentence)
            if in_sentence:
                return in_sentence[0]
    return mentions[0]


def extract_duration_days(text: str) -> int | None:
    """Duration stated in free text ("one week", "14 days"), if any."""
    m = _DURATION.search(text)
    if not m:
        return None
    count = int(m.group(1)) if m.group(1) else _WORD_NUMBERS[m.group(2).lower()]
    unit = m.group(3).lower()
    return count * 7 if unit == "week" else count
