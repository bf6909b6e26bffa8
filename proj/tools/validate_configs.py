#!/usr/bin/env python3
"""Checks run configs against schema/run_config.schema.json.

usage: validate_configs.py SCHEMA [--reject] FILE...
Files listed after --reject must fail validation.
"""
import json
import sys

import jsonschema


def main(argv):
    schema = json.load(open(argv[1]))
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)
    expect_valid = True
    bad = 0
    for arg in argv[2:]:
        if arg == "--reject":
            expect_valid = False
            continue
        errors = list(validator.iter_errors(json.load(open(arg))))
        if expect_valid and errors:
            bad += 1
            print(f"{arg}: {errors[0].message}")
        elif not expect_valid and not errors:
            bad += 1
            print(f"{arg}: accepted but should be rejected")
        else:
            print(f"{arg}: ok")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
