from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence, Tuple

from croplab.errors import InvalidInputError

PROMPT_LENGTH = 4


class ObjectClass(str, Enum):
    DISC = 'disc'
    SQUARE = 'square'
    TRIANGLE = 'triangle'
    RING = 'ring'


OBJECT_CLASSES: Tuple[str, ...] = tuple(c.value for c in ObjectClass)

# Modifier words come from the prompt-engineering study ("a complete X", "X in the middle").
VOCABULARY: Tuple[str, ...] = ('<pad>', 'a', 'complete', 'middle') + OBJECT_CLASSES
TOKEN_IDS: Dict[str, int] = {word: i for i, word in enumerate(VOCABULARY)}
PAD_ID = TOKEN_IDS['<pad>']

TEMPLATES: Dict[str, Tuple[str, ...]] = {
    'plain': ('a', '{cls}'),
    'complete': ('a', 'complete', '{cls}'),
    'middle': ('a', '{cls}', 'middle'),
}


@dataclass(frozen=True)
class PromptTokens:
    """
    Fixed-length tokenized prompt.

    Attributes:
        token_ids: PROMPT_LENGTH vocabulary ids, padded with ``<pad>``
        object_token_index: Position of the (first) object-class token
        extra_object_indices: Positions of further object tokens in multi-object prompts
    """
    token_ids: Tuple[int, ...]
    object_token_index: int
    extra_object_indices: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if len(self.token_ids) != PROMPT_LENGTH:
            raise InvalidInputError(f"Prompt must have {PROMPT_LENGTH} tokens, got {len(self.token_ids)}")
        if any(not 0 <= t < len(VOCABULARY) for t in self.token_ids):
            raise InvalidInputError(f"Unknown token id in {self.token_ids}")
        for index in self.object_indices:
            if not 0 <= index < PROMPT_LENGTH:
                raise InvalidInputError(f"Object token index {index} outside prompt of length {PROMPT_LENGTH}")

    @property
    def object_indices(self) -> Tuple[int, ...]:
        return (self.object_token_index,) + tuple(self.extra_object_indices)

    @property
    def words(self) -> List[str]:
        return [VOCABULARY[t] for t in self.token_ids]

    @property
    def object_class(self) -> str:
        return VOCABULARY[self.token_ids[self.object_token_index]]

    def __str__(self) -> str:
        return ' '.join(w for w in self.words if w != '<pad>')


def _pad(words: Sequence[str]) -> Tuple[int, ...]:
    if len(words) > PROMPT_LENGTH:
        raise InvalidInputError(f"Prompt '{' '.join(words)}' exceeds {PROMPT_LENGTH} tokens")
    ids = [TOKEN_IDS[w] for w in words]
    return tuple(ids + [PAD_ID] * (PROMPT_LENGTH - len(ids)))


def make_prompt(object_class: str, template: str = 'plain') -> PromptTokens:
    """
    Tokenize a single-object prompt such as "a disc".

    Args:
        object_class: One of OBJECT_CLASSES
        template: Key of TEMPLATES

    Returns:
        PromptTokens with the class token position recorded
    """
    object_class = getattr(object_class, 'value', object_class)
    if object_class not in OBJECT_CLASSES:
        raise InvalidInputError(f"Unknown object class '{object_class}'")
    if template not in TEMPLATES:
        raise InvalidInputError(f"Unknown prompt template '{template}', expected one of {sorted(TEMPLATES)}")
    words = [w.format(cls=object_class) for w in TEMPLATES[template]]
    return PromptTokens(_pad(words), words.index(object_class))


def make_multi_prompt(object_classes: Sequence[str]) -> PromptTokens:
    """Tokenize "a X Y ..." with every class token marked as an object token."""
    if not object_classes:
        raise InvalidInputError("Multi-object prompt needs at least one class")
    for cls in object_classes:
        if cls not in OBJECT_CLASSES:
            raise InvalidInputError(f"Unknown object class '{cls}'")
    words = ['a'] + list(object_classes)
    indices = tuple(range(1, len(words)))
    return PromptTokens(_pad(words), indices[0], indices[1:])
