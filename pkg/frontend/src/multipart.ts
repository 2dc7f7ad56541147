/**
 * Parser for the service's multipart/mixed generation responses: each part
 * carries Content-Type, Content-Disposition (with a name) and an explicit
 * Content-Length, so payloads are sliced by length rather than by searching
 * for the boundary inside binary data.
 */

export interface MultipartPart {
  name: string;
  contentType: string;
  payload: Uint8Array;
}

const encoder = new TextEncoder();
const decoder = new TextDecoder();

function indexOfSeq(haystack: Uint8Array, needle: Uint8Array, from: number): number {
  outer: for (let i = from; i <= haystack.length - needle.length; i++) {
    for (let j = 0; j < needle.length; j++) {
      if (haystack[i + j] !== needle[j]) continue outer;
    }
    return i;
  }
  return -1;
}

export function boundaryFromContentType(contentType: string): string {
  const match = /boundary=("?)([^";]+)\1/.exec(contentType);
  if (!match) {
    throw new Error(`no boundary in content type: ${contentType}`);
  }
  return match[2];
}

export function parseMultipart(body: Uint8Array, contentType: string): Map<string, MultipartPart> {
  const boundary = boundaryFromContentType(contentType);
  const delim = encoder.encode(`--${boundary}`);
  const headerEnd = encoder.encode('\r\n\r\n');
  const parts = new Map<string, MultipartPart>();

  let pos = indexOfSeq(body, delim, 0);
  while (pos >= 0) {
    pos += delim.length;
    // closing delimiter is "--boundary--"
    if (body[pos] === 0x2d && body[pos + 1] === 0x2d) break;
    pos += 2; // skip CRLF after the delimiter
    const headEnd = indexOfSeq(body, headerEnd, pos);
    if (headEnd < 0) throw new Error('truncated multipart headers');
    const headerText = decoder.decode(body.subarray(pos, headEnd));
    const headers = new Map<string, string>();
    for (const line of headerText.split('\r\n')) {
      const sep = line.indexOf(':');
      if (sep < 0) continue;
      headers.set(line.slice(0, sep).trim().toLowerCase(), line.slice(sep + 1).trim());
    }
    const disposition = headers.get('content-disposition') ?? '';
    const nameMatch = /name="([^"]*)"/.exec(disposition);
    if (!nameMatch) throw new Error(`part without a name: ${disposition}`);
    const lengthHeader = headers.get('content-length');
    if (lengthHeader === undefined) throw new Error('part without content length');
    const length = parseInt(lengthHeader, 10);
    const start = headEnd + headerEnd.length;
    parts.set(nameMatch[1], {
      name: nameMatch[1],
      contentType: headers.get('content-type') ?? '',
      payload: body.subarray(start, start + length),
    });
    pos = indexOfSeq(body, delim, start + length);
  }
  return parts;
}

/** Inverse of parseMultipart; used by tests and the stub service. */
export function buildMultipart(
  parts: MultipartPart[],
  boundary = 'studio-test-boundary',
): { body: Uint8Array; contentType: string } {
  const chunks: Uint8Array[] = [];
  for (const part of parts) {
    chunks.push(
      encoder.encode(
        `--${boundary}\r\n` +
          `Content-Type: ${part.contentType}\r\n` +
          `Content-Disposition: inline; name="${part.name}"\r\n` +
          `Content-Length: ${part.payload.length}\r\n\r\n`,
      ),
    );
    chunks.push(part.payload);
    chunks.push(encoder.encode('\r\n'));
  }
  chunks.push(encoder.encode(`--${boundary}--\r\n`));
  const total = chunks.reduce((n, c) => n + c.length, 0);
  const body = new Uint8Array(total);
  let offset = 0;
  for (const chunk of chunks) {
    body.set(chunk, offset);
    offset += chunk.length;
  }
  return { body, contentType: `multipart/mixed; boundary=${boundary}` };
}
