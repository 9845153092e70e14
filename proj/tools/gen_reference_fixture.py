#!/usr/bin/env python3
"""Decode forged instruction words with capstone and freeze the result.

usage: gen_reference_fixture.py CORPUS_DIR OUT_TSV [--limit N]

CORPUS_DIR is the output of `plc-binx forge`. Every distinct (word, address)
pair from the manifests is decoded as ARM32 little endian. The output TSV has
columns address, word, capstone text, forge text.
"""
import argparse
import json
import pathlib

import capstone


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("corpus")
    ap.add_argument("out")
    ap.add_argument("--limit", type=int, default=1500)
    args = ap.parse_args()

    md = capstone.Cs(capstone.CS_ARCH_ARM, capstone.CS_MODE_ARM)
    seen = {}
    for path in sorted(pathlib.Path(args.corpus, "manifests").glob("*.json")):
        m = json.loads(path.read_text())
        for fn in m["functions"]:
            for addr, word, text in fn["instructions"]:
                # one sample per distinct word keeps the fixture varied
                if word not in seen:
                    seen[word] = (addr, text)

    decoded = []
    for word in sorted(seen):
        addr, forge_text = seen[word]
        insns = list(md.disasm(word.to_bytes(4, "little"), addr))
        ref = f"{insns[0].mnemonic} {insns[0].op_str}".strip() if insns else "(invalid)"
        decoded.append((addr, word, ref, forge_text))

    # round robin over mnemonics so rare instruction forms are kept
    buckets = {}
    for row in decoded:
        buckets.setdefault(row[2].split(" ")[0], []).append(row)
    rows = []
    queues = [buckets[k] for k in sorted(buckets)]
    depth = 0
    while len(rows) < args.limit and any(depth < len(q) for q in queues):
        for q in queues:
            if depth < len(q) and len(rows) < args.limit:
                rows.append(q[depth])
        depth += 1
    rows.sort(key=lambda r: r[1])

    lines = ["# capstone %s, ARM32 little endian" % capstone.__version__,
             "address\tword\tcapstone\tforge"]
    lines += [f"0x{a:x}\t0x{w:08x}\t{r}\t{f}" for a, w, r, f in rows]
    pathlib.Path(args.out).write_text("\n".join(lines) + "\n")
    agree = sum(r == f for _, _, r, f in rows)
    print(f"{len(rows)} words, {agree} agree")


if __name__ == "__main__":
    main()
