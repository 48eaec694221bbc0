import argparse
import sys

from config.settings import BUNDLED_EXAMPLES, OUTPUT_DIR
from controllers.scenario_controller import ScenarioController
from models.scenario import RunReport
from utils.formatters import format_duration, format_matrix, matrix_from_document
from utils.logger import app_logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='gcsync',
        description='Guaranteed-cost output-feedback synchronization: design, analyze and simulate.')
    subparsers = parser.add_subparsers(dest='command', required=True)

    def common(sub, gains: bool = False, config: bool = True):
        if config:
            sub.add_argument('--config', help='scenario configuration file (JSON)')
        if gains:
            sub.add_argument('--gains', help='gains file with Ku and Kphi')
        sub.add_argument('--out', default=OUTPUT_DIR, help='output directory')
        sub.add_argument('--dt', type=float, help='override the integration step')
        sub.add_argument('--horizon', type=float, help='override the simulation horizon')
        sub.add_argument('--budget', type=float, help='override the cost budget')

    common(subparsers.add_parser('design', help='synthesize protocol gains'))
    common(subparsers.add_parser('analyze', help='certify given gains'), gains=True)
    common(subparsers.add_parser('simulate', help='simulate the closed-loop network'), gains=True)
    reproduce = subparsers.add_parser('reproduce', help='run a bundled example end to end')
    reproduce.add_argument('example', help=f"one of {', '.join(BUNDLED_EXAMPLES)}")
    common(reproduce, config=False)
    common(subparsers.add_parser('sweep', help='search the smallest feasible budget'))
    return parser


def print_report(report: RunReport):
    """Short console summary; the full report is the JSON file"""
    line = f"{report.command}: {report.status}"
    if report.reason:
        line += f" ({report.reason})"
    print(line)
    if report.gains:
        for name in ('Ku', 'Kphi'):
            print(f"{name} =\n{format_matrix(matrix_from_document(report.gains[name], name))}")
    for label, value in (('cost bound', report.cost_bound), ('final cost', report.final_cost),
                         ('minimum budget', report.details.get('minimum_budget'))):
        if value is not None:
            print(f"{label}: {value:.6g}")
    uptime = report.performance.get('process', {}).get('uptime_seconds')
    if uptime is not None:
        print(f"elapsed: {format_duration(uptime)}")
    print(f"report: {report.paths.get('report')}")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    app_logger.log_application_start(args.command)

    controller = ScenarioController(out_dir=args.out, dt=args.dt, horizon=args.horizon, budget=args.budget)
    if args.command == 'design':
        report = controller.cmd_design(args.config)
    elif args.command == 'analyze':
        report = controller.cmd_analyze(args.config, args.gains)
    elif args.command == 'simulate':
        report = controller.cmd_simulate(args.config, args.gains)
    elif args.command == 'reproduce':
        report = controller.cmd_reproduce(args.example)
    else:
        report = controller.cmd_sweep(args.config)

    print_report(report)

    app_logger.log_application_stop(report.exit_code)
    return report.exit_code


def main():
    """Main application entry point"""
    sys.exit(run())


if __name__ == "__main__":
    main()
