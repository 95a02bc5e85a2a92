#!/usr/bin/env python3
"""
mdpreg command-line entry point.

    python app.py fit-online --train train.csv --responses y1,y2 --out state.json
"""
from src.cli.commands import main

if __name__ == "__main__":
    main()
