#!/usr/bin/env python3
"""Stands in for a CodeQL-style CLI in tests.

database create <db> --language=python --source-root=<src> --overwrite
database analyze <db> <suite> --format=sarif-latest --output=<file>

Findings come from line regexes. FAKE_CODEQL_MODE=crash exits 3 during
analyze; FAKE_CODEQL_MODE=garbage writes a non-JSON result file.
"""
import json
import os
import pathlib
import re
import sys

RULES = [
    ("py/weak-sensitive-data-hashing", re.compile(r"\b(md5|sha1)\("),
     ["security", "external/cwe/cwe-327", "external/cwe/cwe-328", "external/cwe/cwe-916"]),
    ("py/sql-injection", re.compile(r"execute\(f[\"']"), ["security", "external/cwe/cwe-089"]),
    ("py/flask-debug", re.compile(r"debug=True"), ["security", "external/cwe/cwe-215", "external/cwe/cwe-489"]),
]


def opt(args, name):
    for a in args:
        if a.startswith(name + "="):
            return a.split("=", 1)[1]
    return None


def main(argv):
    if argv[:2] == ["database", "create"]:
        db = pathlib.Path(argv[2])
        db.mkdir(parents=True, exist_ok=True)
        (db / "source_root").write_text(opt(argv, "--source-root"))
        return 0
    if argv[:2] == ["database", "analyze"]:
        if os.environ.get("FAKE_CODEQL_MODE") == "crash":
            print("fatal: out of memory", file=sys.stderr)
            return 3
        db = pathlib.Path(argv[2])
        out = pathlib.Path(opt(argv, "--output"))
        if os.environ.get("FAKE_CODEQL_MODE") == "garbage":
            out.write_text("{not sarif")
            return 0
        src = pathlib.Path((db / "source_root").read_text())
        results = []
        for f in sorted(src.rglob("*.py")):
            for lineno, line in enumerate(f.read_text().splitlines(), 1):
                for idx, (rule_id, pattern, _) in enumerate(RULES):
                    if pattern.search(line):
                        results.append({
                            "ruleId": rule_id,
                            "rule": {"id": rule_id, "index": idx},
                            "message": {"text": "match of " + rule_id},
                            "locations": [{"physicalLocation": {
                                "artifactLocation": {"uri": f.relative_to(src).as_posix(), "uriBaseId": "%SRCROOT%"},
                                "region": {"startLine": lineno}}}],
                        })
        rules = [{"id": r, "properties": {"tags": tags}} for r, _, tags in RULES]
        doc = {"version": "2.1.0", "runs": [{"tool": {"driver": {"name": "CodeQL", "rules": rules}},
                                             "results": results}]}
        out.write_text(json.dumps(doc))
        return 0
    print("unsupported: " + " ".join(argv), file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
