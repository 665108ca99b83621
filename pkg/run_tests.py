#!/usr/bin/env python3
"""
Test runner for the dense prior NeRF pipeline.

Quick mode runs the unit and property tests (slow experiment checks are deselected by
pytest.ini); --full also runs the end-to-end experiment checks marked `slow`.

Usage:
    python run_tests.py            # quick tests
    python run_tests.py --full     # quick tests plus slow experiments
    python run_tests.py tests/test_volume_render.py
"""

import argparse
import os
import subprocess
import sys
from datetime import datetime


def run_command_live(command, description):
    """Run a command with live output (no buffering)."""
    print(f"\n🔄 {description}...")
    print("-" * 50)

    try:
        process = subprocess.Popen(
            command,
            shell=True,
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            bufsize=1,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        for line in iter(process.stdout.readline, ""):
            print(line, end="")
        process.stdout.close()
        return_code = process.wait()

        if return_code == 0:
            print(f"\n✅ {description} - SUCCESS")
            return True
        print(f"\n❌ {description} - FAILED (exit code: {return_code})")
        return False

    except KeyboardInterrupt:
        print(f"\n⏹️ {description} - CANCELLED by user")
        process.terminate()
        return False


def run_quick_tests():
    """Imports, configuration and the unit test suite."""
    print("🚀 QUICK TESTS")
    print("=" * 60)

    results = [
        run_command_live(
            "python -c \"import src.autodiff, src.scene, src.sparse, src.completion, src.field, src.render, src.nerf; "
            "print('✅ All imports successful')\"",
            "Package imports check",
        ),
        run_command_live(
            "python -c \"from src.config.settings import load_settings; s = load_settings('configs/desk.yaml'); "
            "print(f'✅ Desk config: {s.scene.image_width}x{s.scene.image_height}, density {s.sparse.density}')\"",
            "Configuration validation",
        ),
        run_command_live("python -m pytest -v --tb=short", "Unit and property tests"),
    ]
    return results


def run_full_tests():
    """Quick tests plus the slow end-to-end experiment checks."""
    results = run_quick_tests()
    print("\n🧪 FULL TESTS - end-to-end experiments (CPU, may take hours)")
    print("=" * 60)
    results.append(run_command_live("python -m pytest -m slow -v --tb=short -s", "Experiment checks"))
    return results


def main():
    """Run tests based on the command line."""
    parser = argparse.ArgumentParser(description="Dense prior NeRF test runner")
    parser.add_argument("--full", action="store_true", help="Also run the slow experiment checks")
    parser.add_argument("pattern", nargs="?", default=None, help="Run only this test path or node id")
    args = parser.parse_args()

    print("🧪 Dense Prior NeRF - Test Suite")
    print("=" * 60)
    print(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")

    if args.pattern:
        results = [run_command_live(f"python -m pytest {args.pattern} -v --tb=short", f"Custom test: {args.pattern}")]
    elif args.full:
        results = run_full_tests()
    else:
        results = run_quick_tests()

    print("\n" + "=" * 60)
    print("📊 TEST SUMMARY")
    print("=" * 60)

    passed = sum(results)
    total = len(results)
    if passed == total:
        print(f"🎉 ALL TESTS PASSED! ({passed}/{total})")
        return 0
    print(f"❌ SOME TESTS FAILED ({passed}/{total} passed)")
    return 1


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n👋 Test runner cancelled by user")
        sys.exit(1)
