"""Synthetic weakly-paired fundus / OCT / text triplets.

Each disease class plants a binary "predilection site" mask in the OCT
grid and owns an independent fundus pattern, so the two image modalities
are statistically related only through the class label. Prompts are
rendered from paraphrase templates over a synthetic disease vocabulary.
All generation is bit-reproducible given (seed, arguments).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ContractError, TemplateError

# First template mirrors the classification prompt used at inference time.
PROMPT_TEMPLATES = (
    "This retina fundus image shows {NAME}, {ABBR}",
    "A fundus photograph consistent with {NAME} ({ABBR})",
    "Retinal scan displaying features of {NAME}, abbreviated {ABBR}",
    "Signs of {NAME}, {ABBR}, visible in this fundus image",
)

DEFAULT_TEMPLATE = PROMPT_TEMPLATES[0]

# On-mask OCT signal amplitude is kept at >= 4x the noise std so the
# planted on/off-mask contrast survives sampling noise.
_MIN_SIGNAL = 1.0
_SIGNAL_NOISE_RATIO = 4.0


def render_prompt(template: str, name: str, abbr: str) -> str:
    """Substitute {NAME} and {ABBR} placeholders verbatim."""
    for placeholder in ("{NAME}", "{ABBR}"):
        if placeholder not in template:
            raise TemplateError(f"template is missing the {placeholder} placeholder")
    return template.replace("{NAME}", name).replace("{ABBR}", abbr)


@dataclass(frozen=True)
class DiseaseSpec:
    """One synthetic disease class with its planted ground truth."""

    class_id: int
    name: str
    abbr: str
    site_mask: np.ndarray  # n x d binary, at least one nonzero
    fundus_pattern: np.ndarray  # n x d, independent of the OCT mask
    prompt_bank: tuple[str, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Sample:
    fundus_raw: np.ndarray
    oct_raw: np.ndarray
    prompt: str
    class_id: int


@dataclass(frozen=True)
class TripletBatch:
    samples: tuple[Sample, ...]

    def __post_init__(self):
        if len(self.samples) < 2:
            raise ContractError(
                f"batch size must be >= 2 for in-batch negatives, got {len(self.samples)}"
            )

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(s.class_id for s in self.samples)


def signal_amplitude(noise: float) -> float:
    return max(_MIN_SIGNAL, _SIGNAL_NOISE_RATIO * noise)


def make_world(num_classes: int, n: int, d: int, seed: int) -> list[DiseaseSpec]:
    """Build a deterministic class table with pairwise-distinct site masks."""
    if num_classes < 2:
        raise ContractError(f"need at least 2 classes, got {num_classes}")
    if n < 1 or d < 2:
        raise ContractError(f"grid must be at least 1x2, got {n}x{d}")
    if num_classes > 2 ** (n * d):
        raise CapacityError(
            f"cannot plant {num_classes} distinct masks in a {n}x{d} binary grid"
        )

    rng = np.random.default_rng([int(seed), 0])
    seen: set[bytes] = set()
    specs = []
    for class_id in range(num_classes):
        for _ in range(10000):
            mask = (rng.random((n, d)) < 0.3).astype(np.float64)
            if mask.sum() == 0:
                continue
            key = mask.tobytes()
            if key not in seen:
                seen.add(key)
                break
        else:
            raise CapacityError(
                f"mask space too saturated to draw a fresh {n}x{d} mask for class {class_id}"
            )
        pattern = rng.normal(0.0, 1.0, size=(n, d))
        name = f"Synthetic Disease {class_id}"
        abbr = f"SD{class_id}"
        bank = tuple(render_prompt(t, name, abbr) for t in PROMPT_TEMPLATES)
        mask.setflags(write=False)
        pattern.setflags(write=False)
        specs.append(
            DiseaseSpec(
                class_id=class_id,
                name=name,
                abbr=abbr,
                site_mask=mask,
                fundus_pattern=pattern,
                prompt_bank=bank,
            )
        )
    return specs


def draw_oct_raw(spec: DiseaseSpec, noise: float, rng: np.random.Generator) -> np.ndarray:
    amp = signal_amplitude(noise)
    return amp * spec.site_mask + noise * rng.normal(size=spec.site_mask.shape)


def draw_fundus_raw(spec: DiseaseSpec, noise: float, rng: np.random.Generator) -> np.ndarray:
    return spec.fundus_pattern + noise * rng.normal(size=spec.fundus_pattern.shape)


def sample_batch(
    world: list[DiseaseSpec], batch: int, noise: float, seed: int
) -> TripletBatch:
    """Draw a class-balanced batch of weakly-paired triplets.

    Fundus and OCT entries at the same index share a class label but are
    generated by independent draws (unpaired by construction).
    """
    if not world:
        raise ContractError("world is empty")
    if batch < 2:
        raise ContractError(f"batch size must be >= 2, got {batch}")
    if noise < 0:
        raise ContractError(f"noise must be non-negative, got {noise}")

    rng = np.random.default_rng([int(seed), 1])
    samples = []
    for i in range(batch):
        spec = world[i % len(world)]
        oct_raw = draw_oct_raw(spec, noise, rng)
        fundus_raw = draw_fundus_raw(spec, noise, rng)
        prompt = spec.prompt_bank[int(rng.integers(len(spec.prompt_bank)))]
        oct_raw.setflags(write=False)
        fundus_raw.setflags(write=False)
        samples.append(
            Sample(fundus_raw=fundus_raw, oct_raw=oct_raw, prompt=prompt, class_id=spec.class_id)
        )
    return TripletBatch(samples=tuple(samples))


def world_to_json(world: list[DiseaseSpec]) -> dict:
    """JSON-serializable world document (schema documented in the README)."""
    return {
        "classes": [
            {
                "class_id": s.class_id,
                "name": s.name,
                "abbr": s.abbr,
                "site_mask": s.site_mask.astype(int).tolist(),
                "fundus_pattern": s.fundus_pattern.tolist(),
                "prompt_bank": list(s.prompt_bank),
            }
            for s in world
        ]
    }


def world_from_json(doc: dict) -> list[DiseaseSpec]:
    specs = []
    for entry in doc["classes"]:
        mask = np.array(entry["site_mask"], dtype=np.float64)
        pattern = np.array(entry["fundus_pattern"], dtype=np.float64)
        mask.setflags(write=False)
        pattern.setflags(write=False)
        specs.append(
            DiseaseSpec(
                class_id=int(entry["class_id"]),
                name=entry["name"],
                abbr=entry["abbr"],
                site_mask=mask,
                fundus_pattern=pattern,
                prompt_bank=tuple(entry["prompt_bank"]),
            )
        )
    return specs
