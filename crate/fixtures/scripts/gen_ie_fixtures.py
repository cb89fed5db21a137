"""Regenerate ie_clean.jsonl and ie_corrupt.jsonl.

Each corrupt case is a clean tagging with one defect applied. Every case
must fail the fidelity check.
"""
import json
import unicodedata
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent

# (text, [(phrase, category)]) with phrases listed in text order
SENTENCES = [
    ("Yuki walked from the station to the Semper Opera House in Dresden.", [("Yuki", "Character"), ("Semper Opera House", "Landmark"), ("Dresden", "City")]),
    ("Ingrid wrote from Zürich, where the lake had frozen at the edges.", [("Ingrid", "Character"), ("Zürich", "City")]),
    ("Mr. Novák met Tobias at the Charles Bridge in Prague.", [("Mr. Novák", "Character"), ("Tobias", "Character"), ("Charles Bridge", "Landmark"), ("Prague", "City")]),
    ("Keiko thinks the Frauenkirche is finer than the opera.", [("Keiko", "Character"), ("Frauenkirche", "Landmark")]),
    ("The team in Kraków delivered the migration on schedule.", [("Kraków", "City")]),
    ("Priya compared the samples with the ones held by the museum in Helsinki.", [("Priya", "Character"), ("Helsinki", "City")]),
    ("Most visitors walk from the station to the Fushimi Inari shrine in Kyoto.", [("Fushimi Inari shrine", "Landmark"), ("Kyoto", "City")]),
    ("東京 is two hours away, and Hiroshi's train leaves at noon.", [("東京", "City"), ("Hiroshi", "Character")]),
    ("It's cold in Lisbon, but Amara still takes the café's corner table.", [("Lisbon", "City"), ("Amara", "Character")]),
    ("Rain again, so Tobias and Yuki stayed near the Semper Opera House.", [("Tobias", "Character"), ("Yuki", "Character"), ("Semper Opera House", "Landmark")]),
]


def spans(text, ents):
    out, pos = [], 0
    for phrase, cat in ents:
        i = text.index(phrase, pos)
        pos = i + len(phrase)
        out.append((i, i + len(phrase), cat))
    return out


def render(text, sp):
    parts, last = [], 0
    for s, e, c in sp:
        parts += [text[last:s], f"<{c}>{text[s:e]}</{c}>"]
        last = e
    parts.append(text[last:])
    return "".join(parts)


def corruptions(text, sp):
    good = render(text, sp)
    s, e, c = sp[0]
    dot = good.rindex(".")
    yield "altered_char", good[: dot - 1] + "X" + good[dot:]
    words = good.split(" ")
    i = next(i for i, w in enumerate(words) if i > 0 and "<" not in w and ">" not in w)
    yield "dropped_word", " ".join(words[:i] + words[i + 1 :])
    yield "invented_tag", good.replace(f"<{c}>", "<Villain>", 1).replace(f"</{c}>", "</Villain>", 1)
    yield "unbalanced", good.replace(f"</{c}>", "", 1)
    yield "lowercase_tag", good.replace(f"<{c}>", f"<{c.lower()}>", 1).replace(f"</{c}>", f"</{c.lower()}>", 1)
    yield "commentary", "Here is the tagged passage:\n" + good
    yield "truncated", good[:-12]
    other = "Weather"
    mid = s + max(1, (e - s) // 2)
    end2 = min(len(text), e + 5)
    yield "crossing", (
        text[:s] + f"<{c}>" + text[s:mid] + f"<{other}>" + text[mid:e] + f"</{c}>" + text[e:end2] + f"</{other}>" + text[end2:]
    )
    yield "rewritten", good.replace(" is ", " was ", 1) if " is " in good else good.replace(" the ", " a ", 1)


def main():
    corrupt, clean = [], []
    for n, (text, ents) in enumerate(SENTENCES):
        sp = spans(text, ents)
        good = render(text, sp)
        clean.append({
            "id": f"s{n:02}",
            "chunk": text,
            "output": good,
            "spans": [{"category": c, "start": len(text[:s].encode()), "end": len(text[:e].encode())} for s, e, c in sp],
        })
        for kind, out in corruptions(text, sp):
            assert out != good, (n, kind)
            corrupt.append({"id": f"s{n:02}-{kind}", "kind": kind, "chunk": text, "output": out})
    # encoding-level defects on the non-ASCII sentences
    extra = [
        (1, "decomposed", lambda g: unicodedata.normalize("NFD", g)),
        (8, "curly_quote", lambda g: g.replace("'", "’")),
        (7, "dropped_cjk", lambda g: g.replace("東京", "東")),
    ]
    for n, kind, f in extra:
        text, ents = SENTENCES[n]
        good = render(text, spans(text, ents))
        out = f(good)
        assert out != good, kind
        corrupt.append({"id": f"s{n:02}-{kind}", "kind": kind, "chunk": text, "output": out})
    for name, rows in [("ie_clean.jsonl", clean), ("ie_corrupt.jsonl", corrupt)]:
        with open(OUT / name, "w", encoding="utf-8") as f:
            for r in rows:
                f.write(json.dumps(r, ensure_ascii=False) + "\n")
    print(len(clean), len(corrupt))


if __name__ == "__main__":
    main()
