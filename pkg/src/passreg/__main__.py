import sys

from passreg.cli import main

sys.exit(main())
