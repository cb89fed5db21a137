"""Minimal bridge for tests: looks up lexicon phrases instead of running NER.

usage: python3 toy_bridge.py LEXICON.json
"""
import json
import sys


def main():
    with open(sys.argv[1], encoding="utf-8") as f:
        lexicon = json.load(f)
    hello = {"protocol": "tagforge-bridge", "version": 1, "labels": sorted(lexicon)}
    print(json.dumps(hello), flush=True)
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        text = req["text"]
        if text == "FAIL":
            print(json.dumps({"id": req["id"], "error": "asked to fail"}), flush=True)
            continue
        entities = []
        for label, phrases in lexicon.items():
            for p in phrases:
                i = text.find(p)
                while i >= 0:
                    # character offsets to UTF-8 byte offsets
                    start = len(text[:i].encode("utf-8"))
                    entities.append({"label": label, "start": start, "end": start + len(p.encode("utf-8"))})
                    i = text.find(p, i + len(p))
        entities.sort(key=lambda e: (e["start"], -e["end"]))
        print(json.dumps({"id": req["id"], "entities": entities}), flush=True)


if __name__ == "__main__":
    main()
