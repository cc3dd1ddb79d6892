from topoattn.cli import main
import sys
sys.exit(main())
