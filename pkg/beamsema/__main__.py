import sys

from beamsema.cli import main

sys.exit(main())
