import os
import sys
import json
import argparse

import numpy as np

from activity_logger import log_activity, DATA_PATH
from analysis import regularity_pipeline, write_profiles, c11_norm, holder_seminorm
from config_loader import load_settings, get_thread_count
from errors import FieldFormatError, NumericalError, ValidationError
from field_io import read_field, write_field
from fields import Grid2D, ScalarField, hessian
from generators import KINDS, generate_potential
from geometry import lagrangian_phase, rotation_budget
from rotation import rotate_graph, verify_phase_shift, write_rotated_graph
from run_manifest import RunManifest, save_json
from solvers import SolverConfig, hs_residual, solve_hamiltonian_stationary, solve_special_lagrangian
from verify_suites import SUITES, run_suite

# Códigos de salida estables para todos los comandos
EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_VALIDATION = 2
EXIT_IO = 3


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid-n", type=int, default=None, help="Nodos por lado (>= 17)")
    common.add_argument("--half-width", type=float, default=None, help="Semiancho w del cuadrado [-w, w]²")
    common.add_argument("--mask-radius", type=float, default=None, help="Radio del disco interior")
    common.add_argument("--alpha", type=float, default=None, help="Exponente α de Hölder para D²u")
    common.add_argument("--alpha-bar", type=float, default=None, help="Exponente ᾱ de Hölder para θ")
    common.add_argument("--lambda", dest="lam", type=float, default=None, help="Cota C^{1,1} Λ")
    common.add_argument("--tol", type=float, default=None, help="Tolerancia de Newton")
    common.add_argument("--max-iter", type=int, default=None, help="Máximo de iteraciones de Newton/Picard")
    common.add_argument("--seed", type=int, default=None, help="Semilla del manifiesto")
    common.add_argument("--out", default=DATA_PATH, help="Carpeta de salida")
    common.add_argument("--config", default=None, help="JSON de configuración adicional")

    parser = argparse.ArgumentParser(description="Laboratorio numérico de grafos gradiente lagrangianos")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="Genera un potencial manufacturado")
    gen.add_argument("--kind", choices=KINDS, required=True)
    gen.add_argument("--params", default="{}", help='Parámetros JSON, p. ej. \'{"M": [[1,0],[0,1]]}\'')

    solve = sub.add_parser("solve", help="Resuelve SL o HS")
    eq = solve.add_subparsers(dest="equation", required=True)
    sl = eq.add_parser("sl", parents=[common], help="Ecuación lagrangiana especial")
    sl.add_argument("--boundary", required=True, help="Campo con los datos de borde de u")
    sl.add_argument("--theta", default=None, help="Campo de fase prescrita")
    sl.add_argument("--theta-value", type=float, default=None, help="Fase constante")
    hs = eq.add_parser("hs", parents=[common], help="Ecuación hamiltoniana estacionaria")
    hs.add_argument("--boundary", required=True, help="Campo con los datos de borde de u")
    hs.add_argument("--theta-boundary", default=None, help="Campo con los datos de borde de θ")
    hs.add_argument("--theta-value", type=float, default=None, help="Fase de borde constante")

    rot = sub.add_parser("rotate", parents=[common], help="Rota el grafo gradiente por δ")
    rot.add_argument("--u", required=True, help="Campo del potencial")
    rot.add_argument("--theta-holder", type=float, default=None, help="[θ]_ᾱ (por defecto se mide)")

    ver = sub.add_parser("verify", parents=[common], help="Suites de propiedades")
    ver.add_argument("--suite", choices=SUITES, required=True)
    ver.add_argument("--trials", type=int, default=None)

    ana = sub.add_parser("analyze", parents=[common], help="Pipeline de regularidad")
    ana.add_argument("--u", required=True, help="Campo del potencial")

    bud = sub.add_parser("budget", parents=[common], help="Presupuesto de constantes de la rotación")
    bud.add_argument("--theta-holder", type=float, default=0.0)
    return parser


def resolve_settings(args):
    """Flags > --config > archivo de configuración > valores por defecto."""
    settings = load_settings()
    if args.config:
        settings = load_settings(args.config, base=settings)
    grid = settings["GRID"]
    for flag, key in (("grid_n", "n_per_side"), ("half_width", "half_width"), ("mask_radius", "mask_radius")):
        if getattr(args, flag) is not None:
            grid[key] = getattr(args, flag)
    solver = settings["SOLVER"]
    for flag, key in (("tol", "newton_tol"), ("max_iter", "max_newton"), ("lam", "lambda_bound")):
        if getattr(args, flag) is not None:
            solver[key] = getattr(args, flag)
    analysis = settings["ANALYSIS"]
    for flag in ("alpha", "alpha_bar", "seed"):
        if getattr(args, flag) is not None:
            analysis[flag] = getattr(args, flag)
    return settings


def _grid(settings):
    g = settings["GRID"]
    return Grid2D(g["n_per_side"], g["half_width"], g["mask_radius"])


def _solver_config(settings):
    return SolverConfig.from_dict(settings["SOLVER"])


def _phase_input(path, value, grid, label):
    if path:
        return read_field(path)
    if value is None:
        raise ValidationError(f"Falta {label}: use un archivo o --theta-value")
    return ScalarField(grid, np.full((grid.n_per_side, grid.n_per_side), float(value)))


def run_generate(args, settings, manifest):
    grid = _grid(settings)
    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as e:
        raise ValidationError(f"--params no es JSON válido: {e}")
    print(f"\n🌱 Generando potencial '{args.kind}' en grilla {grid.n_per_side}x{grid.n_per_side}...")
    result = generate_potential(args.kind, params, grid, lambda_bound=args.lam)
    for name, f in result.items():
        manifest.record(write_field(f, os.path.join(args.out, f"{name}.csv")))
    lam = c11_norm(result["u"], grid.mask_radius)
    print(f"✅ Potencial escrito en {args.out} (Λ medido = {lam:.6g})")
    log_activity(f"Potencial {args.kind} generado (Λ = {lam:.4g})", "Generación", "fa-seedling", args.out)
    return EXIT_OK


def run_solve(args, settings, manifest):
    cfg = _solver_config(settings)
    manifest.config = cfg.to_dict()
    u_boundary = read_field(args.boundary)
    manifest.input_paths.append(args.boundary)
    grid = u_boundary.grid
    manifest.grid = grid.to_dict()

    if args.equation == "sl":
        theta = _phase_input(args.theta, args.theta_value, grid, "la fase")
        if args.theta:
            manifest.input_paths.append(args.theta)
        print(f"\n🧮 Newton SL sobre {int(grid.unknown_mask.sum())} incógnitas...")
        log_activity("Iniciando Newton SL", "Solver", "fa-calculator", args.out)
        u, report = solve_special_lagrangian(theta, u_boundary, cfg)
        outputs = {"u": u}
        payload = report.to_dict()
    else:
        theta_b = _phase_input(args.theta_boundary, args.theta_value, grid, "la fase de borde")
        if args.theta_boundary:
            manifest.input_paths.append(args.theta_boundary)
        print(f"\n🧮 Picard HS sobre {int(grid.unknown_mask.sum())} incógnitas...")
        log_activity("Iniciando Picard HS", "Solver", "fa-calculator", args.out)
        u, theta, report = solve_hamiltonian_stationary(u_boundary, theta_b, cfg)
        outputs = {"u": u, "theta": theta}
        payload = report.to_dict()
        payload["hs_residual_max"] = float(np.max(np.abs(hs_residual(u).values)))

    for name, f in outputs.items():
        manifest.record(write_field(f, os.path.join(args.out, f"{name}.csv")))
    manifest.record(save_json(os.path.join(args.out, "solve_report.json"), payload))

    estado = "✅ Convergió" if report.converged else "❌ No convergió"
    print(f"{estado} en {report.iterations} iteraciones (residuo final {report.final_residual:.3e})")
    log_activity(f"Solver {args.equation.upper()}: {'convergió' if report.converged else 'sin converger'} "
                 f"({report.iterations} it.)", "Solver", "fa-check-circle" if report.converged else "fa-exclamation-triangle",
                 args.out)
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def run_rotate(args, settings, manifest):
    u = read_field(args.u)
    manifest.input_paths.append(args.u)
    grid = u.grid
    manifest.grid = grid.to_dict()
    alpha_bar = settings["ANALYSIS"]["alpha_bar"]
    theta = lagrangian_phase(hessian(u))
    lam = args.lam if args.lam is not None else c11_norm(u, grid.mask_radius)
    holder = args.theta_holder
    if holder is None:
        holder = holder_seminorm(theta, grid.mask_radius, alpha_bar, settings["ANALYSIS"]["pair_budget"],
                                 seed=settings["ANALYSIS"]["seed"])
    budget = rotation_budget(lam, holder, alpha_bar)
    print(f"\n🔄 Rotando grafo: δ = {budget.delta:.6g}, r0 = {budget.r0:.6g}")
    log_activity(f"Rotación por δ = {budget.delta:.4g}", "Rotación", "fa-sync", args.out)
    rg = rotate_graph(u, budget, workers=get_thread_count())
    manifest.record_all(write_rotated_graph(rg, os.path.join(args.out, "rotated"), source_path=args.u))
    shift = verify_phase_shift(u, rg)
    print(f"✅ Grafo rotado escrito en {os.path.join(args.out, 'rotated')} (desvío de fase {shift:.3e})")
    log_activity(f"Rotación completada (desvío de fase {shift:.2e})", "Rotación", "fa-check-circle", args.out)
    return EXIT_OK


def run_verify(args, settings, manifest):
    trials = args.trials if args.trials is not None else settings["VERIFY"]["trials"]
    seed = settings["ANALYSIS"]["seed"]
    manifest.seed = seed
    print(f"\n🧪 Suite '{args.suite}' ({trials} pruebas, semilla {seed})...")
    log_activity(f"Iniciando suite {args.suite}", "Verificación", "fa-check-double", args.out)
    summary = run_suite(args.suite, seed, trials, levels=tuple(settings["VERIFY"]["convergence_levels"]))
    manifest.record(save_json(os.path.join(args.out, f"verify_{args.suite}.json"), summary))
    for name, check in summary["checks"].items():
        icono = "✅" if check["passed"] else "❌"
        detalle = check.get("worst", check.get("slopes"))
        print(f"   {icono} {name}: {detalle}")
    log_activity(f"Suite {args.suite}: {'OK' if summary['passed'] else 'FALLÓ'}", "Verificación",
                 "fa-check-double" if summary["passed"] else "fa-exclamation-triangle", args.out)
    return EXIT_OK if summary["passed"] else EXIT_NOT_CONVERGED


REPORT_ROWS = ("branch", "lam_measured", "sup_u", "theta_alpha", "hessian_alpha", "R_used", "empirical_C1",
               "ball_radius", "theta_at_origin", "rotated_hessian_alpha", "lh_bound", "lh_ok",
               "correction_bound_ok")


def run_analyze(args, settings, manifest):
    u = read_field(args.u)
    manifest.input_paths.append(args.u)
    manifest.grid = u.grid.to_dict()
    a = settings["ANALYSIS"]
    manifest.seed = a["seed"]
    print("\n📈 Pipeline de regularidad...")
    log_activity("Iniciando análisis de regularidad", "Análisis", "fa-chart-line", args.out)
    report = regularity_pipeline(u, a["alpha_bar"], alpha=a["alpha"], pair_budget=a["pair_budget"], seed=a["seed"],
                                 workers=get_thread_count())
    report_path = save_json(os.path.join(args.out, "regularity_report.json"), report.to_dict())
    manifest.record(report_path)
    manifest.record(write_profiles(u, lagrangian_phase(hessian(u)), os.path.join(args.out, "profiles.csv")))
    data = report.to_dict()
    for key in REPORT_ROWS:
        print(f"   {key:<24} {data[key]}")
    print(f"📄 Reporte: {report_path}")
    log_activity(f"Análisis completado: rama {report.branch}", "Análisis", "fa-chart-line", args.out)
    return EXIT_OK


def run_budget(args, settings, manifest):
    lam = args.lam if args.lam is not None else 1.0
    budget = rotation_budget(lam, args.theta_holder, settings["ANALYSIS"]["alpha_bar"])
    print("\n📐 Presupuesto de rotación:")
    for key, value in budget.to_dict().items():
        print(f"   {key:<24} {value!r}")
    manifest.record(save_json(os.path.join(args.out, "budget.json"), budget.to_dict()))
    log_activity(f"Presupuesto Λ = {lam}: δ = {budget.delta:.4g}", "Sistema", "fa-calculator", args.out)
    return EXIT_OK


COMMANDS = {
    "generate": run_generate,
    "solve": run_solve,
    "rotate": run_rotate,
    "verify": run_verify,
    "analyze": run_analyze,
    "budget": run_budget,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    command = args.command if args.command != "solve" else f"solve {args.equation}"

    print("=" * 60)
    os.makedirs(args.out, exist_ok=True)
    log_activity(f"Orquestador iniciado (Comando: {command})", "Sistema", "fa-play", args.out)

    code = EXIT_OK
    manifest = RunManifest(command=command, output_dir=args.out)
    try:
        settings = resolve_settings(args)
        manifest.seed = settings["ANALYSIS"]["seed"]
        manifest.grid = settings["GRID"]
        manifest.config = settings["SOLVER"]
        code = COMMANDS[args.command](args, settings, manifest)
    except FieldFormatError as e:
        code = EXIT_IO
        print(f"\n❌ ERROR DE FORMATO: {e}")
        log_activity(f"Archivo inválido: {e}", "Sistema", "fa-exclamation-triangle", args.out)
    except ValidationError as e:
        code = EXIT_VALIDATION
        print(f"\n❌ ERROR DE VALIDACIÓN: {e}")
        log_activity(f"Validación fallida: {e}", "Sistema", "fa-exclamation-triangle", args.out)
    except NumericalError as e:
        code = EXIT_NOT_CONVERGED
        print(f"\n❌ ERROR NUMÉRICO: {e}")
        log_activity(f"Fallo numérico: {e}", "Sistema", "fa-exclamation-triangle", args.out)
    except OSError as e:
        code = EXIT_IO
        print(f"\n❌ ERROR DE E/S: {e}")
        log_activity(f"Error de E/S: {e}", "Sistema", "fa-exclamation-triangle", args.out)
    finally:
        manifest.write()
        log_activity(f"Orquestador finalizado (Comando: {command}, código {code})", "Sistema", "fa-check-double",
                     args.out)

    print("\n" + "=" * 60)
    print(f"🤖 ORQUESTADOR FINALIZADO (código {code})")
    print("=" * 60)
    return code


if __name__ == "__main__":
    sys.exit(main())
