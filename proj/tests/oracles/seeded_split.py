#!/usr/bin/env python3
# Copyright 2026 The Refine Authors
# SPDX-License-Identifier: Apache-2.0
#
# Independent SplitMix64 + Fisher-Yates used to freeze the expected values in
# test_corpus.cc and test_util.cc. Run: python3 seeded_split.py

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, bound):
        limit = MASK - (MASK % bound)
        while True:
            x = self.next()
            if x < limit:
                return x % bound


def shuffle(items, rng):
    for i in range(len(items), 1, -1):
        j = rng.below(i)
        items[i - 1], items[j] = items[j], items[i - 1]


def split(ids, fraction, seed):
    ids = list(ids)
    shuffle(ids, SplitMix64(seed))
    n = int(fraction * len(ids) + 0.5)
    return ids[:n], ids[n:]


if __name__ == "__main__":
    r = SplitMix64(0)
    print("splitmix64(0) first three:", [hex(r.next()) for _ in range(3)])
    ids = ["q%d" % i for i in range(10)]
    print("10 samples, 0.5, seed 7:", split(ids, 0.5, 7))
    ids = ["q%02d" % i for i in range(100)]
    a, _ = split(ids, 0.5, 1)
    b, _ = split(ids, 0.5, 2)
    print("100 samples seed 1 train head:", a[:5])
    print("100 samples seed 2 train head:", b[:5])
