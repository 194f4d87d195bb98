#!/usr/bin/env python3
# Copyright 2026 The uid-decode Authors
# SPDX-License-Identifier: Apache-2.0
"""Regenerates data/desk_corpus.txt, the bundled desk-scale training corpus.

The text is produced by a seeded stochastic grammar, so it is original,
dedicated to the public domain, and byte-for-byte reproducible:

    python3 tools/make_corpus.py > data/desk_corpus.txt
"""

import random
import sys

SEED = 20261016
N_LINES = 1200

PEOPLE = ["the miller", "the old miller", "the ferryman", "the weaver", "the young weaver",
          "the shepherd", "the baker", "the widow", "the smith", "the schoolmaster",
          "the priest", "the captain", "the girl", "the boy", "the stranger",
          "the doctor", "the fisherman", "the innkeeper", "his brother", "her sister",
          "the mayor", "the carpenter", "the gardener", "the traveller", "the child"]
PLACES = ["the river", "the mill", "the market", "the church", "the harbour", "the valley",
          "the hill", "the forest", "the bridge", "the village", "the inn", "the field",
          "the orchard", "the road", "the square", "the shore", "the meadow", "the town",
          "the garden", "the well"]
THINGS = ["a letter", "the bread", "a basket", "the nets", "a lantern", "the boat",
          "the bell", "a coat", "the wheat", "a horse", "the key", "a book", "the cart",
          "a knife", "the wool", "the apples", "a candle", "the map", "a ring", "the gate"]
TIMES = ["in the morning", "at noon", "in the evening", "at night", "before dawn",
         "after the rain", "in the spring", "in the winter", "on sunday", "that autumn",
         "every day", "once a week", "late in the summer", "at first light"]
WEATHER = ["the rain fell", "the wind rose", "the snow came", "the sun was warm",
           "the fog lay thick", "the air was still", "the clouds gathered",
           "the frost was hard", "the storm passed", "the light faded"]
ADJ = ["quiet", "cold", "bright", "dark", "narrow", "wide", "green", "grey", "old",
       "empty", "crowded", "warm", "long", "steep", "calm", "busy"]
FEEL = ["tired", "glad", "afraid", "angry", "silent", "hungry", "hopeful", "sad",
        "restless", "patient", "proud", "lonely"]
MOVE = ["walked to", "ran to", "went down to", "came back from", "rode to",
        "climbed to", "waited at", "returned to", "looked toward", "stood near"]
ACT = ["carried", "found", "lost", "mended", "sold", "bought", "opened", "hid",
       "gave away", "brought", "kept", "dropped"]
SAY = ["said", "told", "asked", "answered", "whispered", "shouted"]
SPEECH = ["that the river was rising", "that the harvest would be good",
          "that nobody had seen the stranger", "that the bridge was broken",
          "that the bread was still warm", "that the boat had not returned",
          "that the winter would be long", "that the bell had rung twice",
          "that the market was closed", "that the road was safe"]
CONJ = ["and", "but", "so", "because", "while", "when"]


def zipf_choice(rng, items):
    weights = [1.0 / (i + 1) for i in range(len(items))]
    return rng.choices(items, weights=weights, k=1)[0]


def clause(rng):
    form = rng.random()
    who = zipf_choice(rng, PEOPLE)
    if form < 0.25:
        return f"{who} {zipf_choice(rng, MOVE)} {zipf_choice(rng, PLACES)}"
    if form < 0.45:
        return f"{who} {zipf_choice(rng, ACT)} {zipf_choice(rng, THINGS)}"
    if form < 0.58:
        return f"{who} {rng.choice(SAY)} {rng.choice(SPEECH)}"
    if form < 0.70:
        return f"{who} was {zipf_choice(rng, FEEL)}"
    if form < 0.82:
        return f"{zipf_choice(rng, PLACES)} was {zipf_choice(rng, ADJ)}"
    return zipf_choice(rng, WEATHER)


def sentence(rng):
    parts = []
    if rng.random() < 0.35:
        parts.append(zipf_choice(rng, TIMES))
    parts.append(clause(rng))
    while rng.random() < 0.45 and len(parts) < 4:
        parts.append(zipf_choice(rng, CONJ))
        parts.append(clause(rng))
    if rng.random() < 0.2:
        parts.append(zipf_choice(rng, TIMES))
    text = " ".join(parts)
    text = text[0].upper() + text[1:]
    text = text.replace(" but ", ", but ").replace(" so ", ", so ")
    return text + ("." if rng.random() < 0.9 else "!")


def main():
    rng = random.Random(SEED)
    out = sys.stdout
    for _ in range(N_LINES):
        out.write(sentence(rng) + "\n")


if __name__ == "__main__":
    main()
