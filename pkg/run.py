"""
Main entry point for running the SkillLab tool.
Run this script from the project root directory.
"""
import sys

from skilllab.cli import main

if __name__ == "__main__":
    sys.exit(main())
