#!/usr/bin/env node
/**
 * Command-line entry point.
 *
 *     export --slide PATH --backbone {resnet50|ctranspath} --out PATH
 *            [--min-tissue-frac F] [--level L]
 *
 * Exit codes: 0 ok, 1 validation error, 2 I/O error. Diagnostics go to
 * stderr, a one-line JSON summary to stdout.
 */

import yargs from 'yargs';

import { BackboneError, backboneByName } from './backbone';
import { ExportError, exportFeatures } from './export';
import { FbagError } from './fbag';
import { DecodeError } from './png';
import { TilingError } from './tiling';

class UsageError extends Error {}

interface ExportArgs {
  slide: string;
  backbone: string;
  out: string;
  minTissueFrac: number;
  level: number;
}

function parseArgs(argv: string[]): ExportArgs {
  const parser = yargs(argv)
    .scriptName('fbag-export')
    .command('export', 'tile a slide raster and write an FBAG feature bag', y =>
      y
        .option('slide', { type: 'string', demandOption: true, describe: 'slide raster (PNG)' })
        .option('backbone', {
          type: 'string',
          demandOption: true,
          choices: ['resnet50', 'ctranspath'],
          describe: 'feature backbone',
        })
        .option('out', { type: 'string', demandOption: true, describe: 'output .fbag path' })
        .option('min-tissue-frac', {
          type: 'number',
          default: 0.5,
          describe: 'minimum tissue coverage per kept patch',
        })
        .option('level', { type: 'number', default: 0, describe: 'pyramid level (flat rasters: 0)' }),
    )
    .demandCommand(1, 'missing command; expected: export')
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      throw err ?? new UsageError(msg);
    });
  const parsed = parser.parseSync();
  if (parsed._[0] !== 'export') {
    throw new UsageError(`unknown command ${String(parsed._[0])}`);
  }
  return {
    slide: parsed.slide as string,
    backbone: parsed.backbone as string,
    out: parsed.out as string,
    minTissueFrac: parsed['min-tissue-frac'] as number,
    level: parsed.level as number,
  };
}

function isIoError(err: unknown): boolean {
  if (err instanceof DecodeError) return true;
  const code = (err as NodeJS.ErrnoException)?.code;
  return typeof code === 'string' && code.startsWith('E');
}

export function runCli(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const spec = backboneByName(args.backbone);
    const summary = exportFeatures(args.slide, spec, args.out, {
      minTissueFrac: args.minTissueFrac,
      level: args.level,
    });
    // keys sorted so the summary line is stable
    process.stdout.write(
      JSON.stringify({
        backbone: spec.name,
        command: 'export',
        dim: summary.dim,
        n_patches: summary.nPatches,
        out: summary.out,
        patch_size: summary.patchSize,
        slide_id: summary.slideId,
      }) + '\n',
    );
    return 0;
  } catch (err) {
    if (isIoError(err)) {
      process.stderr.write(`i/o error: ${(err as Error).message}\n`);
      return 2;
    }
    if (
      err instanceof UsageError ||
      err instanceof ExportError ||
      err instanceof BackboneError ||
      err instanceof TilingError ||
      err instanceof FbagError
    ) {
      process.stderr.write(`error: ${(err as Error).message}\n`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(runCli(process.argv.slice(2)));
}
