"""
EtrusChain Project Setup Script

This script prepares the project environment:
- Checks dependencies
- Validates configuration
- Initializes the state directory (config.json + genesis block)

Usage:
    python setup.py
"""

import os
import sys


def check_dependencies():
    """Check if required packages are installed."""
    required = ['flask', 'requests', 'dotenv', 'numpy']
    missing = []

    for package in required:
        try:
            __import__(package)
        except ImportError:
            missing.append(package)

    if missing:
        print(f"✗ Missing dependencies: {', '.join(missing)}")
        print("Please run: pip install -r requirements.txt")
        return False

    print("✓ All core dependencies are installed")
    return True


def check_env():
    """Check for .env configuration."""
    if not os.path.exists('.env'):
        print("⚠ Warning: .env file not found, using built-in defaults")
        print("Copy .env.example to .env to change them")
        return False
    print("✓ Found .env configuration")
    return True


def check_config():
    from app.config import Config

    problems = Config.validate()
    for problem in problems:
        print(f"✗ {problem}")
    if not problems:
        print("✓ Configuration values are consistent")
    return not problems


def init_state():
    """Write config.json and the genesis block if the state directory is new."""
    from app.config import ServiceConfig
    from app.persistence import open_contract

    config = ServiceConfig.load_or_create()
    contract = open_contract(config)
    print(f"✓ State directory {config.state_dir} at height {contract.ledger.height}")


def main():
    print("=" * 60)
    print("EtrusChain Project Setup")
    print("=" * 60)

    if not check_dependencies():
        sys.exit(1)
    check_env()
    if not check_config():
        sys.exit(1)
    init_state()

    print("\n" + "=" * 60)
    print("Setup complete!")
    print("=" * 60)
    print("\nNext steps:")
    print("  1. Run the service: python main.py serve")
    print("  2. Upload a file: python main.py upload <path> --owner alice")
    print("\n")


if __name__ == "__main__":
    main()
