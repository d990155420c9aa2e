#!/usr/bin/env python3
"""JSON-lines tagger for `plaus ingest --tagger`.

Reads {"text": ...} per line on stdin and answers with
{"tokens": [{"surface", "lemma", "pos", "start", "end"}, ...]} per line.
Needs spaCy and an English model (default en_core_web_sm).
"""
import json
import sys

import spacy


def main():
    model = sys.argv[1] if len(sys.argv) > 1 else "en_core_web_sm"
    nlp = spacy.load(model, disable=["parser", "ner"])
    for line in sys.stdin:
        try:
            text = json.loads(line)["text"]
            doc = nlp(text)
            tokens = [
                {
                    "surface": t.text,
                    "lemma": t.lemma_,
                    "pos": t.pos_,
                    "start": t.idx,
                    "end": t.idx + len(t.text),
                }
                for t in doc
                if not t.is_space
            ]
            reply = {"tokens": tokens}
        except Exception as e:  # reported back to the caller
            reply = {"error": str(e)}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
