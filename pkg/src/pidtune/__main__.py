import sys

from pidtune.cli import main

sys.exit(main())
