from dig_runtime.commands.bench import handle_bench
from dig_runtime.commands.diagnose import handle_diagnose
from dig_runtime.commands.replay import handle_replay
from dig_runtime.commands.run import handle_run

__all__ = ["handle_bench", "handle_diagnose", "handle_replay", "handle_run"]
