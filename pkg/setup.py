#!/usr/bin/env python3
"""
Setup script for the dense prior NeRF pipeline.
Creates a virtual environment, installs dependencies and prepares run directories.
"""

import os
import shutil
import subprocess
import sys
from pathlib import Path


def run_command(command, description):
    """Run a command and handle errors."""
    print(f"🔄 {description}...")
    try:
        subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
        print(f"✅ {description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed: {e}")
        print(f"Error output: {e.stderr}")
        return False


def check_python_version():
    """Check if Python version is compatible."""
    if sys.version_info < (3, 10):
        print("❌ Python 3.10 or higher is required")
        print(f"Current version: {sys.version}")
        return False
    print(f"✅ Python version {sys.version.split()[0]} is compatible")
    return True


def venv_tool(name):
    return f"venv\\Scripts\\{name}" if os.name == "nt" else f"venv/bin/{name}"


def create_virtual_environment():
    """Create a virtual environment."""
    if os.path.exists("venv"):
        print("✅ Virtual environment already exists")
        return True
    return run_command(f"{sys.executable} -m venv venv", "Creating virtual environment")


def install_dependencies(dev=False):
    """Install runtime (and optionally development) dependencies."""
    pip_cmd = venv_tool("pip")
    if not run_command(f"{pip_cmd} install -r requirements.txt", "Installing dependencies"):
        return False
    if dev:
        return run_command(f"{pip_cmd} install -r requirements-dev.txt", "Installing development dependencies")
    return True


def setup_environment_file():
    """Create .env from the template."""
    env_file = Path(".env")
    if env_file.exists():
        print("✅ .env file already exists")
        return True
    template = Path("env.template")
    if not template.exists():
        print("❌ env.template not found")
        return False
    shutil.copy(template, env_file)
    print("✅ Created .env file from template")
    return True


def create_directories():
    """Create log and run directories."""
    for directory in ["logs", "runs"]:
        Path(directory).mkdir(exist_ok=True)
    print("✅ Created necessary directories")
    return True


def check_imports():
    """Verify the scientific stack imports inside the environment."""
    test_script = (
        "import numpy, scipy, pandas, PIL, structlog, yaml, dotenv, tqdm; "
        "print('✅ All required packages imported successfully')"
    )
    try:
        result = subprocess.run([venv_tool("python"), "-c", test_script], capture_output=True, text=True, check=True)
        print(result.stdout)
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ Import check failed: {e.stderr}")
        return False


def main():
    """Main setup function."""
    print("🚀 Setting up the dense prior NeRF pipeline...")
    print("=" * 50)

    steps = [
        check_python_version,
        create_virtual_environment,
        lambda: install_dependencies(dev="--dev" in sys.argv),
        setup_environment_file,
        create_directories,
        check_imports,
    ]
    for step in steps:
        if not step():
            sys.exit(1)

    print("\n" + "=" * 50)
    print("🎉 Setup completed successfully!")
    print("\n📋 Next steps:")
    print("1. Activate the virtual environment:")
    print("   venv\\Scripts\\activate" if os.name == "nt" else "   source venv/bin/activate")
    print("2. Generate a scene: python dense_prior_nerf.py generate-scene --config configs/desk.yaml")
    print("3. Run the tests: python run_tests.py")


if __name__ == "__main__":
    main()
