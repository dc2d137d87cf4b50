#!/usr/bin/env python3
"""
Enable running the tool directly:
    python -m pxstool run --synth scenes/room.scene --mesh out/
"""
from .cli import main
import sys

if __name__ == '__main__':
    sys.exit(main())
