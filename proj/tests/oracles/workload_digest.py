#!/usr/bin/env python3
# Copyright 2026 The spoton Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Straight-line reference for the staged hash-chain workload.

Prints the final accumulator (hex) for a stage layout and seed. Used once to
pin the digests asserted in workload_test.cpp.
"""
import sys

M = (1 << 64) - 1
G = 0x9E3779B97F4A7C15


def fmix(x):
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & M
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & M
    x ^= x >> 31
    return x


def run(steps_per_stage, seed):
    acc = fmix((seed + G) & M)
    for stage, n in enumerate(steps_per_stage):
        for step in range(n):
            key = (stage << 32) | step
            acc = fmix(acc ^ ((seed + G * (key + 1)) & M))
    return acc


if __name__ == "__main__":
    seed = int(sys.argv[1])
    stages = [int(s) for s in sys.argv[2:]]
    print(f"{run(stages, seed):016x}")
