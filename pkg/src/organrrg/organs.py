"""The fixed five-organ universe and its per-organ protocol constants.

Every per-organ container in the package (mask stacks, descriptions,
fused features, importance coefficients) is indexed by :class:`Organ`
and iterates in :data:`ORGAN_ORDER`.
"""

from enum import Enum


class Organ(str, Enum):
    LUNG = "lung"
    HEART = "heart"
    BONE = "bone"
    PLEURAL = "pleural"
    MEDIASTINUM = "mediastinum"

    def __str__(self) -> str:
        return self.value


# Canonical iteration order for every per-organ structure.
ORGAN_ORDER: tuple[Organ, ...] = (
    Organ.LUNG,
    Organ.HEART,
    Organ.BONE,
    Organ.PLEURAL,
    Organ.MEDIASTINUM,
)

# Number of segmentation-mask channels per organ stack.
MASK_CHANNELS: dict[Organ, int] = {
    Organ.LUNG: 15,
    Organ.HEART: 6,
    Organ.BONE: 70,
    Organ.PLEURAL: 10,
    Organ.MEDIASTINUM: 9,
}

# Fixed token length of each organ's diagnosis description.
DESC_LENGTHS: dict[Organ, int] = {
    Organ.LUNG: 53,
    Organ.HEART: 39,
    Organ.BONE: 48,
    Organ.PLEURAL: 43,
    Organ.MEDIASTINUM: 41,
}

# Concatenating the five descriptions in canonical order yields this many rows.
TOTAL_DESC_LENGTH: int = sum(DESC_LENGTHS[o] for o in ORGAN_ORDER)

# Organ-name aliases (plural and adjective forms) used when assigning report
# sentences to organs.
ORGAN_ALIASES: dict[Organ, tuple[str, ...]] = {
    Organ.LUNG: ("lung", "lungs", "pulmonary"),
    Organ.HEART: ("heart", "cardiac"),
    Organ.BONE: ("bone", "bones", "bony", "osseous", "skeletal"),
    Organ.PLEURAL: ("pleural", "pleura"),
    Organ.MEDIASTINUM: ("mediastinum", "mediastinal"),
}


def organ_index(organ: Organ) -> int:
    """Position of ``organ`` in the canonical order."""
    return ORGAN_ORDER.index(organ)
