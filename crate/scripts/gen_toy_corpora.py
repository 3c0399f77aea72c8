#!/usr/bin/env python3
"""Regenerates the bundled synthetic corpora under crates/core/data/.

Output is deterministic for a fixed seed.
"""
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "crates", "core", "data")

POS = ["great", "wonderful", "brilliant", "delightful", "moving", "superb",
       "charming", "fresh", "clever", "warm", "lovely", "gripping"]
NEG = ["dull", "awful", "boring", "tedious", "clumsy", "bland", "weak",
       "messy", "lifeless", "tiresome", "stale", "shallow"]
NOUNS = ["movie", "film", "story", "script", "cast", "plot", "picture",
         "performance", "direction", "ending", "soundtrack", "dialogue"]
ADVS = ["quite", "really", "truly", "very", "rather", "genuinely"]

SENT_TEMPLATES = [
    "The {n1} was {a1} and the {n2} felt {adv} {a2}.",
    "A {adv} {a1} {n1}, with a {a2} {n2}.",
    "This {n1} is {a1}, and its {n2} is {adv} {a2}.",
    "Overall the {n1} was {adv} {a1} but the {n2} seemed {a2}.",
    "What a {a1} {n1}; the {n2} was {adv} {a2} too!",
    "I found the {n1} {adv} {a1} and the {n2} {a2}.",
]

PEOPLE = ["man", "woman", "boy", "girl", "child", "dog", "chef", "student",
          "farmer", "dancer", "teacher", "runner"]
VERBS = ["running", "eating", "reading", "singing", "painting", "swimming",
         "cooking", "sleeping", "jumping", "walking", "writing", "playing"]
PLACES = ["park", "beach", "kitchen", "library", "garden", "street",
          "river", "stadium", "forest", "market", "bridge", "museum"]
PREM_ADJ = ["sunny", "crowded", "quiet", "old", "small", "busy", "wide",
            "green", "dark", "bright"]
TIMES = ["morning", "evening", "afternoon", "weekend", "night"]
REASONS = ["tomorrow", "probably", "because", "hoping", "perhaps", "later",
           "planning", "maybe", "soon", "wants"]

PREM_TEMPLATES = [
    "A {p} is {v} near the {adj} {pl} this {t}.",
    "In the {adj} {pl}, a {p} is {v} during the {t}.",
    "Every {t} a {p} goes to the {adj} {pl} and is {v} there.",
    "A {p} and a friend are {v} by the {adj} {pl}.",
]
HYP = {
    "entailment": [
        "A {p} is {v}.",
        "Someone is {v} outside.",
        "There is a {p} {v}.",
        "A {p} is busy {v}.",
    ],
    "neutral": [
        "The {p} is {v} because of a {r} plan.",
        "The {p} will {r} be {v} again.",
        "A {p} is {v} and {r} waiting for a friend.",
        "The {p} is probably {v} for a {r} contest.",
    ],
    "contradiction": [
        "Nobody is {v}.",
        "The {p} is not {v} at all.",
        "No {p} is {v} anywhere.",
        "The {p} is never {v}.",
    ],
}


def sentiment_rows(rng, n, prefix):
    rows = []
    for i in range(n):
        label = "positive" if i % 2 == 0 else "negative"
        pool = POS if label == "positive" else NEG
        n1, n2 = rng.sample(NOUNS, 2)
        a1, a2 = rng.sample(pool, 2)
        text = rng.choice(SENT_TEMPLATES).format(
            n1=n1, n2=n2, a1=a1, a2=a2, adv=rng.choice(ADVS))
        rows.append((f"{prefix}{i:04d}", text[0].upper() + text[1:], "", label))
    rng.shuffle(rows)
    return rows


def nli_rows(rng, n, prefix):
    labels = ["entailment", "neutral", "contradiction"]
    rows = []
    for i in range(n):
        label = labels[i % 3]
        p, v = rng.choice(PEOPLE), rng.choice(VERBS)
        prem = rng.choice(PREM_TEMPLATES).format(
            p=p, v=v, adj=rng.choice(PREM_ADJ), pl=rng.choice(PLACES),
            t=rng.choice(TIMES))
        hyp = rng.choice(HYP[label]).format(p=p, v=v, r=rng.choice(REASONS))
        rows.append((f"{prefix}{i:04d}", prem, hyp, label))
    rng.shuffle(rows)
    return rows


def write(name, rows):
    with open(os.path.join(OUT, name), "w", encoding="utf-8") as fh:
        fh.write("id\ttext_a\ttext_b\tlabel\n")
        for r in rows:
            fh.write("\t".join(r) + "\n")


def main():
    rng = random.Random(20201)
    write("sentiment_train.tsv", sentiment_rows(rng, 200, "sst-"))
    write("sentiment_dev.tsv", sentiment_rows(rng, 100, "sst-dev-"))
    write("pair_train.tsv", nli_rows(rng, 300, "nli-"))
    write("pair_dev.tsv", nli_rows(rng, 150, "nli-dev-"))


if __name__ == "__main__":
    main()
