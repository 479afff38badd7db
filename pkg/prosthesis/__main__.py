import sys

from prosthesis.cli import main

sys.exit(main())
