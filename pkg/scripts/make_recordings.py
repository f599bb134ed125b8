"""Generate the synthetic replay recordings shipped with the package.

The replies come from a scripted stand-in model, not from a real LLM: for
each prompt the target's gold items are kept with a probability that grows
with the number of worked examples, and a few distractor words from the
summary are added. The one exception is the zero-shot SQM prompt, whose
reply is the published example output.

    python scripts/make_recordings.py --out src/prodpeers/data/recordings.jsonl
"""

import argparse
import json
import random
from pathlib import Path

from prodpeers import data_path
from prodpeers.corpus import load_corpus, split_train_test
from prodpeers.evaluation import trial_seed
from prodpeers.prompting import format_output, prompt_digest, render_prompt

SQM_PAGE_ID = 7290045
SQM_ZERO_SHOT_REPLY = "{{'PRODUCT': ['plant nutrients', 'iodine', 'lithium', 'industrial chemicals']}}"


def scripted_reply(doc, n_shot, digest):
    if doc.page_id == SQM_PAGE_ID and n_shot == 0:
        return SQM_ZERO_SHOT_REPLY
    rng = random.Random(int(digest, 16))
    keep_p = min(0.95, 0.55 + 0.04 * n_shot)
    items = [item for item in doc.gold if rng.random() < keep_p]
    gold_text = " ".join(doc.gold)
    pool = sorted({w.strip(".,()'\"").lower() for w in doc.company.summary.split()})
    pool = [w for w in pool if len(w) >= 6 and w.isalpha() and w not in gold_text]
    fp_p = max(0.05, 0.45 - 0.04 * n_shot)
    for _ in range(3):
        if pool and rng.random() < fp_p:
            items.append(rng.choice(pool))
    items = [i.capitalize() if rng.random() < 0.2 else i for i in items]
    if not items:
        return "{{'PRODUCT': None}}"
    style = rng.random()
    if style < 0.7:
        return format_output(items)
    if style < 0.85:
        return "Output: " + format_output(items)
    return json.dumps({"PRODUCT": items})


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", default=str(data_path("companies13.jsonl")))
    ap.add_argument("--out", default=str(data_path("recordings.jsonl")))
    ap.add_argument("--model", default="gpt-3.5-turbo")
    ap.add_argument("--max-shot", type=int, default=9)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--seed", type=int, default=2023)
    args = ap.parse_args()

    corpus = load_corpus(args.corpus)
    records = {}
    for n in range(args.max_shot + 1):
        for t in range(args.trials):
            split = split_train_test(corpus, n, trial_seed(args.seed, n, t))
            for doc in split.test:
                prompt = render_prompt(split.train, doc.company.summary)
                digest = prompt_digest(prompt)
                if digest in records:
                    continue
                records[digest] = {
                    "model": args.model,
                    "prompt_sha256": digest,
                    "response": {
                        "id": f"synthetic-{digest[:12]}",
                        "object": "chat.completion",
                        "model": args.model,
                        "choices": [{
                            "index": 0,
                            "message": {"role": "assistant", "content": scripted_reply(doc, n, digest)},
                            "finish_reason": "stop",
                        }],
                    },
                }
    manifest = {"note": "Synthetic replies from scripts/make_recordings.py (scripted stand-in model, "
                        "not real LLM output). The zero-shot SQM reply is the published example.",
                "model": args.model, "max_shot": args.max_shot, "trials": args.trials, "seed": args.seed}
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_manifest": manifest}, sort_keys=True) + "\n")
        for rec in records.values():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote {len(records)} recordings to {Path(args.out)}")


if __name__ == "__main__":
    main()
