"""Seeded generator of small HLS-style kernels.

Every generated kernel contains at least one mutation site for each of the
eight bug operators, so corpus-level tests can exercise the full injection
matrix. Output is a pure function of the RNG state.
"""

from __future__ import annotations

import random

_VERBS = ["scale", "mix", "fold", "gather", "blend", "pack", "sweep", "route"]
_NOUNS = ["rows", "taps", "lanes", "coeffs", "beats", "banks", "words", "frames"]


def make_kernel(rng: random.Random) -> str:
    """One self-contained kernel exercising all eight operator patterns."""
    size = rng.choice([4, 8, 16, 32])
    half = size // 2
    name = f"{rng.choice(_VERBS)}_{rng.choice(_NOUNS)}"
    acc0 = rng.randint(1, 9)
    mask0 = rng.choice([15, 63, 255, 1023])
    shamt = rng.randint(1, 12)
    gain = rng.randint(2, 7)
    unroll_c = rng.choice(["g", "gain"])  # shared factor in the unrolled pair

    lines: list[str] = []
    if rng.random() < 0.5:
        lines.append(f"// {name}: {size}-tap streaming stage")
    lines.append(f"void {name}(const int *src, int *dst, int n) {{")
    if rng.random() < 0.6:
        lines.append("#pragma HLS PIPELINE II=1")
    lines.append(f"    int buf[{size}];")
    lines.append(f"    int out[{size}];")
    lines.append(f"    int half = {half};")
    lines.append(f"    int acc = {acc0};")
    lines.append(f"    int {unroll_c} = {gain};")
    lines.append(f"    unsigned int mask = {mask0};")
    lines.append("    long long wide = 0;")
    lines.append(f"    for (int i = 0; i < {size}; i++) {{")
    if rng.random() < 0.4:
        lines.append("#pragma HLS UNROLL factor=2")
    lines.append("        buf[i] = src[i] + acc;")
    lines.append(f"        acc = acc + (int)(mask << {shamt});")
    lines.append("    }")
    lines.append(f"    for (int j = 0; j < {half}; j++) {{")
    lines.append("        out[j] = buf[j + half];")
    lines.append("        wide = wide + mask;")
    lines.append("    }")
    lines.append(f"    dst[0] = out[0] * {unroll_c};")
    lines.append(f"    dst[1] = out[1] * {unroll_c};")
    if rng.random() < 0.3:
        lines.append("    /* drain the widened accumulator */")
    lines.append("    dst[2] = (int)(wide >> 1) + acc;")
    lines.append("}")
    return "\n".join(lines) + "\n"


def make_corpus(n: int, seed: int) -> list[tuple[str, str]]:
    """`n` (id, code) pairs; deterministic in `seed`."""
    rng = random.Random(seed)
    return [(f"synth/{i:04d}", make_kernel(rng)) for i in range(n)]
