#!/usr/bin/env python3
"""
Quick run script for evoloss
Alternative to main.py with pre-flight checks
"""
import os
import sys


def main():
    """Main function with pre-flight checks"""
    print("🧬 Starting evoloss...")

    if sys.version_info < (3, 9):
        print("❌ Error: Python 3.9 or higher is required")
        print(f"   Current version: {sys.version}")
        sys.exit(1)

    sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

    try:
        import numpy  # noqa: F401
        import joblib  # noqa: F401
        from main import main as main_func
    except ImportError as e:
        print(f"❌ Import Error: {e}")
        print("\n💡 Try running:")
        print("   pip install -r requirements.txt")
        sys.exit(1)

    threads = os.getenv("EVOLOSS_THREADS")
    if threads:
        print(f"🔧 Worker threads from EVOLOSS_THREADS: {threads}")

    sys.exit(main_func())


if __name__ == "__main__":
    main()
