"""Regenerates the desk-scale fixture corpus in this directory.

Every sentence is built from shared frames and filler words; only the
adjectives and closing clauses carry the class, so a bag-of-subwords encoder
separates the classes while the frames themselves say nothing.

Output (all deterministic for the seed below):
  comments.jsonl        raw comment dump, including noise the preprocessor drops
  verdicts.jsonl        LLM pre-assessment and first-iteration model verdicts
  manual_labels.jsonl   protocol labels for every discrepant sentence
  batches.jsonl         synthetic generation batches (12 prompts x 10 + 10)
  vocab.txt             WordPiece vocabulary covering the corpus
"""
import json
import os
import random

SEED = 2024
HERE = os.path.dirname(os.path.abspath(__file__))

BURNOUT_ADJ = ["exhausted", "drained", "overwhelmed", "hopeless", "miserable", "defeated"]
NEUTRAL_ADJ = ["energized", "grateful", "motivated", "confident", "relaxed", "satisfied"]
BURNOUT_TAIL = ["and nothing helps anymore", "and everything hurts", "and I cannot cope", "and I want to quit"]
NEUTRAL_TAIL = ["and work feels meaningful", "and life is good", "and things keep improving", "and I love it"]

EVENTS = ["meeting", "shift", "deadline", "review", "call", "project", "sprint", "audit", "presentation", "inspection"]
PLACES = ["the office", "the clinic", "the warehouse", "school", "the plant", "the store", "the lab", "the bank"]
DURATIONS = ["ten years", "two months", "a decade", "six weeks", "three years", "five months"]
PEOPLE = ["manager", "wife", "husband", "friend", "colleague", "sister", "team lead", "mentor"]
SPHERES = ["nursing", "teaching", "retail", "banking", "logistics", "software", "construction", "law", "sales", "research"]

FRAMES = [
    "I feel {a1} and {a2} after every {event}, {tail}.",
    "Lately every {event} at {place} leaves me {a1} and {a2} {tail}.",
    "Honestly I am {a1} and {a2} most days at {place}, {tail}.",
    "After {duration} in {sphere} I feel {a1} and {a2}, {tail}.",
    "My {person} says I seem {a1} and {a2} lately {tail}.",
    "Another {event} today and I am {a1} and {a2} again, {tail}.",
    "Most evenings I come home from {place} {a1} and {a2}, {tail}.",
    "Working in {sphere} makes me feel {a1} and {a2}, {tail}.",
]

PAST_FRAMES = [
    "Years ago I was {a1} and {a2} at {place} but that is long over.",
    "Back when I worked in {sphere} I was {a1} all the time.",
]
VAGUE_FRAMES = [
    "Not sure how to feel about the {event} at {place} today.",
    "Someone at {place} mentioned the {event} again.",
]

NOISE = ["lol", "first!", "ok", "👍👍👍", "https://youtu.be/dQw4w9WgXcQ", "nice", "😂😂", "+1"]


def sentence(rng, cls, frame):
    adj = BURNOUT_ADJ if cls == "burnout" else NEUTRAL_ADJ
    tail = BURNOUT_TAIL if cls == "burnout" else NEUTRAL_TAIL
    a1, a2 = rng.sample(adj, 2)
    return frame.format(
        a1=a1,
        a2=a2,
        tail=rng.choice(tail),
        event=rng.choice(EVENTS),
        place=rng.choice(PLACES),
        duration=rng.choice(DURATIONS),
        person=rng.choice(PEOPLE),
        sphere=rng.choice(SPHERES),
    )


class Unique:
    """Draws unseen sentences, cycling through the frames separately per
    class so both classes use every frame equally often."""

    def __init__(self, rng):
        self.rng = rng
        self.seen = set()
        self.turn = {}

    def __call__(self, cls, frames=FRAMES):
        key = (cls, id(frames))
        n = self.turn.get(key, 0)
        self.turn[key] = n + 1
        while True:
            s = sentence(self.rng, cls, frames[n % len(frames)])
            if s not in self.seen:
                self.seen.add(s)
                return s


def verdict(sid, labeler, likely):
    return {
        "sentence_id": sid,
        "labeler": labeler,
        "verdict": "likely_burnout" if likely else "unlikely_burnout",
        "created_at": "2024-03-01T12:00:00Z",
    }


def manual(sid, b, t, r, c):
    return {"sentence_id": sid, "burnout_indicators": b, "time_relevance": t, "relevance": r, "confidence": c}


def main():
    rng = random.Random(SEED)
    fresh = Unique(rng)

    # (text, kind, payload): kind is "agree" with a class, or "manual" with a label template.
    items = []
    for i in range(400):
        cls = "burnout" if i % 2 == 0 else "neutral"
        items.append((fresh(cls), "agree", cls))
    for i in range(40):
        items.append((fresh("burnout"), "manual", ("present", "present", "relevant", 1)))
        items.append((fresh("neutral"), "manual", ("not_present", "na", "relevant", 1)))
    for i in range(8):
        items.append((fresh("burnout", PAST_FRAMES), "manual", ("present", "not_present", "relevant", 1)))
        items.append((fresh("burnout"), "manual", ("present", "present", "relevant", 0)))
    for i in range(2):
        items.append((fresh("burnout"), "manual", ("present", "na", "relevant", 1)))
        items.append((fresh("neutral", VAGUE_FRAMES), "manual", ("na", "na", "irrelevant", 1)))
    rng.shuffle(items)

    comments, verdicts, labels = [], [], []
    k = 0
    c = 0
    while k < len(items):
        take = 2 if rng.random() < 0.15 and k + 1 < len(items) else 1
        group = items[k : k + take]
        cid = f"c{c:04d}"
        comments.append({
            "id": cid,
            "video_id": f"v{c % 17:02d}",
            "text": " ".join(g[0] for g in group),
            "fetched_at": "2024-02-20T08:00:00Z",
        })
        for n, (text, kind, payload) in enumerate(group):
            sid = f"{cid}-s{n}"
            if kind == "agree":
                likely = payload == "burnout"
                verdicts.append(verdict(sid, "llm", likely))
                verdicts.append(verdict(sid, "model:1", likely))
            else:
                llm_likely = rng.random() < 0.5
                verdicts.append(verdict(sid, "llm", llm_likely))
                verdicts.append(verdict(sid, "model:1", not llm_likely))
                labels.append(manual(sid, *payload))
        k += take
        c += 1
        if c % 20 == 0:
            # Noise the preprocessor drops, plus one verbatim repost.
            comments.append({"id": f"c{c:04d}", "video_id": "v99", "text": rng.choice(NOISE)})
            c += 1
    comments.append({"id": f"c{c:04d}", "video_id": "v99", "text": comments[0]["text"]})

    synth_fresh = Unique(random.Random(SEED + 1))
    synth_fresh.seen = set(fresh.seen)
    batches = []
    for p in range(12):
        burnout = [synth_fresh("burnout") for _ in range(10)]
        neutral = [synth_fresh("neutral") for _ in range(10)]
        raw = "BURNOUT:\n" + "\n".join(f"{i + 1}. {s}" for i, s in enumerate(burnout))
        raw += "\nNEUTRAL:\n" + "\n".join(f"{i + 1}. {s}" for i, s in enumerate(neutral))
        batches.append({
            "prompt_id": f"p{p:05d}",
            "burnout_sentences": burnout,
            "neutral_sentences": neutral,
            "raw_response": raw,
            "model_name": "fixture",
        })

    words = set()
    texts = [i[0] for i in items] + [s for b in batches for s in b["burnout_sentences"] + b["neutral_sentences"]]
    for t in texts:
        for w in t.lower().split():
            words.add(w)
    tokens = set()
    for w in words:
        core = w.rstrip(".,!?")
        punct = w[len(core):]
        # Exercise subword segmentation on longer inflected words.
        for suffix in ("ing", "ed"):
            if core.endswith(suffix) and len(core) > 7:
                tokens.add(core[: -len(suffix)])
                tokens.add("##" + suffix)
                break
        else:
            tokens.add(core)
        for ch in punct:
            tokens.add("##" + ch)
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"] + sorted(tokens)

    def dump(name, rows):
        with open(os.path.join(HERE, name), "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")

    dump("comments.jsonl", comments)
    dump("verdicts.jsonl", verdicts)
    dump("manual_labels.jsonl", labels)
    dump("batches.jsonl", batches)
    with open(os.path.join(HERE, "vocab.txt"), "w", encoding="utf-8") as f:
        f.write("\n".join(vocab) + "\n")
    print(f"{len(comments)} comments, {len(items)} sentences, {len(labels)} manual labels, {len(vocab)} tokens")


if __name__ == "__main__":
    main()
