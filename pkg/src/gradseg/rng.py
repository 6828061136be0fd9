"""Deterministic, labelled random streams.

Every source of randomness in the system draws from an RngStream keyed by
(seed, label), e.g. ("init", "augment", "suggest"). Identical keys always
reproduce the identical sequence; the underlying PCG64 state serializes to
plain JSON so streams survive checkpoint/resume mid-sequence.
"""

import numpy as np


class RngStream:
    def __init__(self, seed, label):
        self.seed = int(seed)
        self.label = str(label)
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=tuple(self.label.encode("utf-8"))
        )
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None, dtype=np.float64):
        out = self._gen.standard_normal(size)
        return out.astype(dtype, copy=False) if size is not None else out

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def choice_without_replacement(self, items, k):
        items = np.asarray(items)
        idx = self._gen.choice(len(items), size=k, replace=False)
        return items[idx]

    def permutation(self, n):
        return self._gen.permutation(n)

    def get_state(self):
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "label": self.label,
            "state": str(st["state"]["state"]),
            "inc": str(st["state"]["inc"]),
            "has_uint32": st["has_uint32"],
            "uinteger": st["uinteger"],
        }

    @classmethod
    def from_state(cls, blob):
        stream = cls(blob["seed"], blob["label"])
        stream._gen.bit_generator.state = {
            "bit_generator": "PCG64",
            "state": {"state": int(blob["state"]), "inc": int(blob["inc"])},
            "has_uint32": blob["has_uint32"],
            "uinteger": blob["uinteger"],
        }
        return stream
