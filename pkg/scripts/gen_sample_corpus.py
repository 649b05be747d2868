"""Regenerate data/sample_posts.jsonl, the bundled demo corpus.

Synthetic posts across the five supported languages, sized so that
preprocessing keeps a bit over 200 pairs. A handful of posts are junk
(score 0, no code block, empty title) to exercise the skip reporting.
"""

import json
import pathlib
import random

VERBS = ["remove", "sort", "parse", "merge", "convert", "filter", "split",
         "read", "update", "count", "group", "join", "format", "validate"]
NOUNS = ["list", "dictionary", "string", "array", "dataframe", "file", "json",
         "table", "column", "query", "object", "map", "buffer", "stream"]
IDENTS = ["data", "result", "items", "value", "config", "buffer", "record",
          "index", "parser", "handler", "cursor", "payload", "temp", "node",
          "rows", "cache", "token", "queue", "entry", "field"]

TEMPLATES = {
    "python": "def {fn}({a}, {b}):\n    {c} = []\n    for {d} in {a}:\n"
              "        if {d} > {n}:  # keep big ones\n            {c}.append({d} * {m})\n"
              "    {e} = {{'key': \"{s}\", 'size': {n}}}\n    return {c}, {e}\n",
    "java": "public List<Integer> {fn}(List<Integer> {a}) {{\n"
            "    List<Integer> {c} = new ArrayList<>();\n"
            "    for (int {d} : {a}) {{ /* scan */\n"
            "        if ({d} > {n}) {{ {c}.add({d} * {m}); }}\n    }}\n"
            "    String {e} = \"{s}\";\n    return {c};\n}}\n",
    "javascript": "function {fn}({a}, {b}) {{\n  const {c} = [];\n"
                  "  for (const {d} of {a}) {{ // walk items\n"
                  "    if ({d} > {n}) {{ {c}.push({d} * {m}); }}\n  }}\n"
                  "  let {e} = '{s}';\n  return {c}.concat({b});\n}}\n",
    "csharp": "public List<int> {fn}(List<int> {a}) {{\n"
              "    var {c} = new List<int>();\n"
              "    foreach (var {d} in {a}) {{ // iterate\n"
              "        if ({d} > {n}) {{ {c}.Add({d} * {m}); }}\n    }}\n"
              "    string {e} = \"{s}\";\n    return {c};\n}}\n",
    "sql": "SELECT {a}.id, {a}.{b}, COUNT({c}) AS total -- aggregate\n"
           "FROM {d} AS {a}\nJOIN {e} ON {e}.id = {a}.{b}_id\n"
           "WHERE {a}.score > {n} AND {a}.name <> '{s}'\n"
           "GROUP BY {a}.id, {a}.{b}\nHAVING COUNT({c}) > {m}\n"
           "ORDER BY total DESC LIMIT {n};\n",
}

TITLE_TEMPLATES = [
    "How to {verb} a {noun} in {lang}?",
    "What is the best way to {verb} a {noun}?",
    "Why does my {lang} code not {verb} the {noun}?",
    "Which method should I use to {verb} a {noun}?",
    "How can I {verb} nested {noun} values?",
]

LANG_NAMES = {"python": "python", "java": "java", "javascript": "javascript",
              "csharp": "c#", "sql": "sql"}


def make_posts(count=215, seed=20240811):
    rng = random.Random(seed)
    langs = list(TEMPLATES)
    posts = []
    for pid in range(1, count + 1):
        lang = langs[pid % len(langs)]
        names = rng.sample(IDENTS, 5)
        code = TEMPLATES[lang].format(
            fn=rng.choice(VERBS) + "_" + rng.choice(NOUNS),
            a=names[0], b=names[1], c=names[2], d=names[3], e=names[4],
            n=rng.randint(1, 99), m=rng.randint(2, 9),
            s=rng.choice(NOUNS))
        title = rng.choice(TITLE_TEMPLATES).format(
            verb=rng.choice(VERBS), noun=rng.choice(NOUNS),
            lang=LANG_NAMES[lang])
        body = f"I tried this:\n<code>\n{code}</code>\nbut it fails."
        posts.append({"id": pid, "lang": lang, "title": title, "body": body,
                      "score": rng.randint(1, 40)})
    # junk posts that preprocessing must skip or filter out
    nid = count + 1
    posts.append({"id": nid, "lang": "python", "title": "How to do it?",
                  "body": "<code>\nx = 1\n</code>", "score": 0})
    posts.append({"id": nid + 1, "lang": "java", "title": "What about this?",
                  "body": "no code here at all", "score": 5})
    posts.append({"id": nid + 2, "lang": "sql", "title": "   ",
                  "body": "<code>\nSELECT 1;\n</code>", "score": 3})
    posts.append({"id": nid + 3, "lang": "python", "title": "Broken markers, how?",
                  "body": "<code>\nx = 1\n", "score": 2})
    posts.append({"id": nid + 4, "lang": "python",
                  "title": "Sorting lists quickly",  # no interrogative keyword
                  "body": "<code>\n" + TEMPLATES["python"].format(
                      fn="sort_list", a="data", b="key", c="out", d="x",
                      e="meta", n=3, m=2, s="list") + "</code>", "score": 9})
    return posts


def main():
    out = pathlib.Path(__file__).resolve().parents[1] / "data" / "sample_posts.jsonl"
    out.parent.mkdir(exist_ok=True)
    posts = make_posts()
    with open(out, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(json.dumps(post) + "\n")
    print(f"wrote {len(posts)} posts to {out}")


if __name__ == "__main__":
    main()
