"""Independent reference implementation of the deterministic pseudo-embedding.

Deliberately written in a different style from the package code (modular
arithmetic instead of bit masks, an explicit byte loop, array-based float32
conversion) so it can serve as a cross-implementation oracle.
"""

import array

TWO64 = 2**64

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def reference_fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = h ^ b
        h = (h * FNV_PRIME) % TWO64
    return h


def reference_splitmix64_stream(seed: int, n: int) -> list:
    outputs = []
    state = seed % TWO64
    for _ in range(n):
        state = (state + GAMMA) % TWO64
        z = state
        z = ((z ^ (z // 2**30)) * MIX1) % TWO64
        z = ((z ^ (z // 2**27)) * MIX2) % TWO64
        z = z ^ (z // 2**31)
        outputs.append(z)
    return outputs


def reference_embed(text: str, dim: int) -> list:
    """Return the embedding as a list of float32 values (via array('f'))."""
    seed = reference_fnv1a64(text.encode("utf-8"))
    raw = []
    for z in reference_splitmix64_stream(seed, dim):
        raw.append((z // 2**11) * 2.0**-53 * 2.0 - 1.0)
    norm_sq = 0.0
    for v in raw:
        norm_sq = norm_sq + v * v
    norm = norm_sq**0.5
    as_f32 = array.array("f", [v / norm for v in raw])
    return list(as_f32)


if __name__ == "__main__":
    print("fnv1a64(b'') =", reference_fnv1a64(b""))
    print("fnv1a64(b'ciao') =", reference_fnv1a64(b"ciao"))
    for text in ("ciao", "addio"):
        vec = reference_embed(text, 8)
        print(f"reference_embed({text!r}, 8) =")
        for v in vec:
            print(f"    {v!r},")
