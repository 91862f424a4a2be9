"""Lead and class orderings used for every serialized vector."""

from .errors import ConfigError

LEADS = ("I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6")
CLASSES = ("NSR", "CD", "HYP", "MI", "STTC")
DISEASES = CLASSES[1:]

LEAD_INDEX = {name: i for i, name in enumerate(LEADS)}
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}


def lead_index(lead) -> int:
    """Accept a lead name ('V1') or an index (6)."""
    if isinstance(lead, str):
        try:
            return LEAD_INDEX[lead]
        except KeyError:
            raise ConfigError(f"unknown lead {lead!r}; expected one of {LEADS}") from None
    i = int(lead)
    if not 0 <= i < len(LEADS):
        raise ConfigError(f"lead index {i} out of range")
    return i
