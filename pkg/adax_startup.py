import shutil


def adax_startup(version, command, seed, horizon_cap, workers, debug_level, log_file):
    """
    Displays the startup screen for ADAX with a retro ASCII design.

    Args:
        version: Version number of ADAX.
        command: Subcommand being run.
        seed: Resolved base seed.
        horizon_cap: Maximum number of queries per interaction.
        workers: Number of worker processes for independent runs.
        debug_level: Current debug level for logging.
        log_file: Path to the log file.
    """

    ascii_logo = """
     █████╗ ██████╗  █████╗ ██╗  ██╗
    ██╔══██╗██╔══██╗██╔══██╗╚██╗██╔╝
    ███████║██║  ██║███████║ ╚███╔╝
    ██╔══██║██║  ██║██╔══██║ ██╔██╗
    ██║  ██║██████╔╝██║  ██║██╔╝ ██╗
    ╚═╝  ╚═╝╚═════╝ ╚═╝  ╚═╝╚═╝  ╚═╝
    """

    info_text = f"""
| Command           : {command}
| Base Seed         : {seed}
| Horizon Cap       : {horizon_cap} queries
| Workers           : {workers}
| Debug Level       : {debug_level}
| Log File          : {log_file}
| Quit ADAX         : Press Ctrl-C at any time.
    """

    terminal_width = shutil.get_terminal_size().columns

    def add_indentation(line, indent_size=4):
        return ' ' * indent_size + line

    indented_info_lines = [add_indentation(line) for line in info_text.splitlines()]
    centered_logo_lines = [line.center(terminal_width) for line in ascii_logo.splitlines()]

    top_bottom_border = ' ' * 4 + '-' * (terminal_width - 8)
    title_line = ' ' * 4 + f"ADAPTIVE DATA ANALYSIS TOOLKIT v{version}".center(terminal_width - 8)

    print("\n".join(centered_logo_lines))
    print(top_bottom_border)
    print(title_line)
    print(top_bottom_border)
    print("\n".join(indented_info_lines))
    print(top_bottom_border)
