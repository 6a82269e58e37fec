#!/usr/bin/env node
/**
 * Command-line entry point; flags mirror the ExportJob fields.
 *
 *   regionadapt-export --manifest data/manifest.json --images-root data/images \
 *       --model pixstat/64 --regions-out out/regions.bin --texts-out out/texts.bin \
 *       --normalize
 */

import { parseArgs } from 'node:util';
import { pathToFileURL } from 'node:url';

import { runExport } from './export.js';

const USAGE = `usage: regionadapt-export --manifest PATH --images-root DIR
                          --regions-out PATH --texts-out PATH
                          [--model ID] [--normalize] [--device NAME]
                          [--template STR ...]

Reads a region-dataset manifest, encodes each sample's crop and each
vocabulary class, and writes both embedding tables in the binary format the
regionadapt package loads.

options:
  --manifest PATH     dataset manifest JSON (required)
  --images-root DIR   directory of <image_id>.ppm files (required)
  --regions-out PATH  output file for region embeddings (required)
  --texts-out PATH    output file for class embeddings (required)
  --model ID          encoder identifier (default pixstat/64)
  --normalize         L2-normalize region rows
  --device NAME       placement hint (default cpu)
  --template STR      prompt template with [CLASS]; repeatable
  --help              show this message`;

export function runCli(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        manifest: { type: 'string' },
        'images-root': { type: 'string' },
        model: { type: 'string', default: 'pixstat/64' },
        'regions-out': { type: 'string' },
        'texts-out': { type: 'string' },
        normalize: { type: 'boolean', default: false },
        device: { type: 'string', default: 'cpu' },
        template: { type: 'string', multiple: true },
        help: { type: 'boolean', default: false },
      },
    });
  } catch (e) {
    console.error((e as Error).message);
    console.error(USAGE);
    return 2;
  }
  const opts = parsed.values;
  if (opts.help) {
    console.log(USAGE);
    return 0;
  }
  for (const required of ['manifest', 'images-root', 'regions-out', 'texts-out'] as const) {
    if (!opts[required]) {
      console.error(`missing required flag --${required}`);
      console.error(USAGE);
      return 2;
    }
  }
  try {
    const summary = runExport({
      manifestPath: opts.manifest!,
      imagesRoot: opts['images-root']!,
      model: opts.model!,
      regionsOut: opts['regions-out']!,
      textsOut: opts['texts-out']!,
      normalize: opts.normalize!,
      device: opts.device!,
      templates: opts.template,
    });
    console.log(JSON.stringify(summary));
    return 0;
  } catch (e) {
    console.error(`export failed: ${(e as Error).message}`);
    return 1;
  }
}

if (import.meta.url === pathToFileURL(process.argv[1] ?? '').href) {
  process.exit(runCli(process.argv.slice(2)));
}
