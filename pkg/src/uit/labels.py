"""Merged keyword + sound-event label catalog."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

KEYWORDS = ("yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go")
N_EVENTS = 527
SPEECH = "Speech"


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label names with the keyword and event index ranges.

    The default catalog places the 527 sound events first (index 0 is
    ``Speech``, as in the Audioset ontology ordering) followed by the ten
    keywords. Non-keyword utterances are tagged with ``speech_index``.
    """

    names: tuple
    keyword_indices: range
    event_indices: range
    speech_index: int

    def __post_init__(self):
        kw, ev = self.keyword_indices, self.event_indices
        if set(kw) & set(ev):
            raise ValueError("keyword and event ranges overlap")
        if len(self.names) != len(kw) + len(ev):
            raise ValueError(
                f"label count {len(self.names)} != {len(kw)} keywords + {len(ev)} events"
            )
        if self.speech_index not in ev:
            raise ValueError(f"speech_index {self.speech_index} is not an event index")

    def __len__(self):
        return len(self.names)

    @property
    def keywords(self):
        return [self.names[i] for i in self.keyword_indices]

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def merged(cls, event_names=None, keywords=KEYWORDS) -> "LabelSpace":
        """Build the event ∪ keyword catalog.

        ``event_names`` defaults to placeholders (``event_001`` ...) with
        ``Speech`` at position 0; pass the real ontology names when
        available (see :func:`read_event_names`).
        """
        if event_names is None:
            event_names = [SPEECH] + [f"event_{i:03d}" for i in range(1, N_EVENTS)]
        event_names = list(event_names)
        if SPEECH not in event_names:
            raise ValueError(f"event names must contain {SPEECH!r}")
        n_ev = len(event_names)
        return cls(
            names=tuple(event_names) + tuple(keywords),
            keyword_indices=range(n_ev, n_ev + len(keywords)),
            event_indices=range(0, n_ev),
            speech_index=event_names.index(SPEECH),
        )

    @classmethod
    def small(cls, n_keywords: int, n_events: int) -> "LabelSpace":
        """Toy catalog for desk-scale experiments; event 0 is ``Speech``."""
        events = [SPEECH] + [f"event_{i}" for i in range(1, n_events)]
        kws = [f"kw_{i}" for i in range(n_keywords)]
        return cls.merged(events, kws)


def read_event_names(path) -> list:
    """Read ``index,mid,display_name`` rows (Audioset class index CSV)."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and not rows[0][0].strip().isdigit():
        rows = rows[1:]
    return [r[2].strip() for r in sorted(rows, key=lambda r: int(r[0]))]


DEFAULT_LABELS = LabelSpace.merged()
