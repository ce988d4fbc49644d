"""Caption redundancy scoring and instruction-sample templating."""

from __future__ import annotations

import logging
import random
import re
import string
import unicodedata
from dataclasses import dataclass
from itertools import combinations
from typing import Any, Callable, Hashable, Iterable, Mapping, Optional, Sequence

from .corpus import DROPPED, KEPT, LANGUAGES, Caption, Decision, VideoRecord

log = logging.getLogger(__name__)

TASK_TYPES = ("short_caption", "detailed_description", "mc_vqa", "oe_vqa", "single_round", "multi_round")
CAPTION_TASKS = ("short_caption", "detailed_description")

DEFAULT_TEMPLATES: dict[str, list[str]] = {
    "short_caption": [
        "Describe the video briefly.",
        "Give a one-sentence summary of the video.",
        "What happens in this video? Answer in one sentence.",
    ],
    "detailed_description": [
        "Describe the video in detail.",
        "Provide a detailed description of what happens in the video.",
        "Explain the content of the video thoroughly.",
    ],
    "mc_vqa": ["{question}\n{options}\nAnswer with the option's letter from the given choices directly."],
    "oe_vqa": ["{question}", "{question}\nAnswer the question using a short phrase."],
}

_TERMINALS = re.compile(r"[.!?。！？]")


def split_sentences(text: str, language: str = "en") -> list[str]:
    """Split on terminal punctuation (ASCII and CJK), dropping empty pieces."""
    return [s.strip() for s in _TERMINALS.split(text) if s.strip()]


def _is_separator(ch: str) -> bool:
    return ch.isspace() or unicodedata.category(ch).startswith("P") or ch in string.punctuation


def _runs(sentence: str) -> list[str]:
    runs, cur = [], []
    for ch in sentence:
        if _is_separator(ch):
            if cur:
                runs.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
    if cur:
        runs.append("".join(cur))
    return runs


def english_words(sentence: str) -> set[str]:
    return {w.lower() for w in _runs(sentence)}


def chinese_bigrams(sentence: str) -> set[str]:
    """Overlapping character bigrams within each punctuation-free run."""
    words = set()
    for run in _runs(sentence):
        if len(run) == 1:
            words.add(run)
        else:
            words.update(run[i : i + 2] for i in range(len(run) - 1))
    return words


# language -> segmenter; swap in a lexicon-based segmenter by replacing an entry
SEGMENTERS: dict[str, Callable[[str], set[str]]] = {
    "en": english_words,
    "zh": chinese_bigrams,
}


def word_set(sentence: str, language: str = "en") -> frozenset[str]:
    try:
        segment = SEGMENTERS[language]
    except KeyError:
        raise ValueError(f"no segmenter for language {language!r}") from None
    return frozenset(segment(sentence))


@dataclass(frozen=True)
class SentenceSet:
    sentence_text: str
    words: frozenset[str]

    @classmethod
    def of(cls, sentence: str, language: str = "en") -> "SentenceSet":
        return cls(sentence, word_set(sentence, language))


def _words(x) -> frozenset:
    return x.words if isinstance(x, SentenceSet) else frozenset(x)


def sentence_pair_iou(a, b) -> float:
    """|a & b| / |a | b| over word sets. Two empty sets score 0 (logged)."""
    wa, wb = _words(a), _words(b)
    union = len(wa | wb)
    if union == 0:
        log.warning("IoU of two empty word sets; scoring 0")
        return 0.0
    return len(wa & wb) / union


def caption_redundancy(caption: Caption, language: Optional[str] = None) -> float:
    """Maximum pairwise sentence IoU of a caption; 0 for a single sentence."""
    language = language or caption.language
    sets = [SentenceSet.of(s, language) for s in split_sentences(caption.text, language)]
    return max((sentence_pair_iou(a, b) for a, b in combinations(sets, 2)), default=0.0)


def record_redundancy(record: VideoRecord) -> float:
    return max((caption_redundancy(c) for c in record.captions), default=0.0)


def annotate_redundancy(records: Iterable[VideoRecord], threshold: float) -> list[VideoRecord]:
    """Attach a ``caption_redundancy`` decision to every record."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    out = []
    for r in records:
        score = record_redundancy(r)
        out.append(r.with_decision("caption_redundancy", Decision(DROPPED if score > threshold else KEPT, score)))
    return out


def refine_captions(records: Iterable[VideoRecord], threshold: float) -> list[VideoRecord]:
    """Records whose caption redundancy does not exceed ``threshold``."""
    return [r for r in annotate_redundancy(records, threshold) if not r.filter_status["caption_redundancy"].dropped]


@dataclass(frozen=True)
class InstructionSample:
    task_type: str
    prompt: str
    response: str
    video_id: str
    language: str = "en"

    def __post_init__(self):
        if self.task_type not in TASK_TYPES:
            raise ValueError(f"unknown task type {self.task_type!r}")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_type": self.task_type,
            "prompt": self.prompt,
            "response": self.response,
            "video_id": self.video_id,
            "language": self.language,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "InstructionSample":
        return cls(data["task_type"], data["prompt"], data["response"], data["video_id"], data.get("language", "en"))


def _choose(template_set: Mapping[str, Sequence[str]], task_type: str, seed: Hashable) -> str:
    if task_type not in TASK_TYPES:
        raise ValueError(f"unknown task type {task_type!r}")
    templates = template_set.get(task_type) or []
    if not templates:
        raise ValueError(f"no templates for task type {task_type!r}")
    return random.Random(str(seed)).choice(list(templates))


def caption_to_qa(
    caption: Caption,
    task_type: str,
    template_set: Mapping[str, Sequence[str]] = DEFAULT_TEMPLATES,
    seed: Hashable = 0,
    video_id: str = "",
) -> InstructionSample:
    """Turn a caption into a QA pair with a seeded template choice."""
    if task_type not in CAPTION_TASKS:
        raise ValueError(f"{task_type!r} is not a caption task")
    prompt = _choose(template_set, task_type, seed)
    return InstructionSample(task_type, prompt, caption.text, video_id, caption.language)


def option_label(i: int) -> str:
    return chr(ord("A") + i)


def mc_template(
    question: str,
    options: Sequence[str],
    answer_index: int,
    video_id: str = "",
    language: str = "en",
    template: Optional[str] = None,
) -> InstructionSample:
    """Multiple-choice prompt with options labelled (A), (B), ...; the response is the letter."""
    if not 2 <= len(options) <= 26:
        raise ValueError(f"need 2-26 options, got {len(options)}")
    if not 0 <= answer_index < len(options):
        raise IndexError(f"answer_index {answer_index} out of range for {len(options)} options")
    block = "\n".join(f"({option_label(i)}) {opt}" for i, opt in enumerate(options))
    template = template or DEFAULT_TEMPLATES["mc_vqa"][0]
    prompt = template.format(question=question, options=block)
    return InstructionSample("mc_vqa", prompt, option_label(answer_index), video_id, language)


def oe_template(
    question: str,
    answer: str,
    template_set: Mapping[str, Sequence[str]] = DEFAULT_TEMPLATES,
    seed: Hashable = 0,
    video_id: str = "",
    language: str = "en",
) -> InstructionSample:
    prompt = _choose(template_set, "oe_vqa", seed).format(question=question)
    return InstructionSample("oe_vqa", prompt, answer, video_id, language)


def load_templates(data: Mapping[str, Any]) -> dict[str, list[str]]:
    """Validate a task_type -> [template, ...] mapping; unknown task types are errors."""
    out = {}
    for task, templates in data.items():
        if task not in TASK_TYPES:
            raise ValueError(f"unknown task type {task!r} in templates")
        if not isinstance(templates, list) or not all(isinstance(t, str) and t for t in templates):
            raise ValueError(f"templates for {task!r} must be a list of non-empty strings")
        out[task] = templates
    return out


def item_to_sample(item: Mapping[str, Any], template_set: Mapping[str, Sequence[str]], seed: Hashable) -> InstructionSample:
    """Build a sample from one raw instruction item.

    Items carry ``video_id`` and ``task_type`` plus the fields of their kind:
    ``caption`` for caption tasks, ``question``/``options``/``answer_index``
    for multiple choice, ``question``/``answer`` for open-ended QA, and a
    ready-made ``prompt``/``response`` for conversations.
    """
    task = item.get("task_type")
    video_id = item.get("video_id")
    if not isinstance(video_id, str) or not video_id:
        raise ValueError("instruction item needs a video_id")
    language = item.get("language", "en")
    if task in CAPTION_TASKS:
        return caption_to_qa(Caption(language, item["caption"]), task, template_set, seed, video_id)
    if task == "mc_vqa":
        mc = template_set.get("mc_vqa") or DEFAULT_TEMPLATES["mc_vqa"]
        template = random.Random(str(seed)).choice(list(mc))
        return mc_template(item["question"], item["options"], item["answer_index"], video_id, language, template)
    if task == "oe_vqa":
        return oe_template(item["question"], item["answer"], template_set, seed, video_id, language)
    if task in ("single_round", "multi_round"):
        return InstructionSample(task, item["prompt"], item["response"], video_id, language)
    raise ValueError(f"unknown task type {task!r}")
