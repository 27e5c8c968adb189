# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hash-chain kernels backed by OpenSSL's libcrypto.

Same contract as cachepuzzle._purepy (bit-identical output, asserted by the
test suite); this version keeps the whole chain walk in C and releases the
GIL, which matters for the solver where an average solve touches
pieces_total / 2 * n * r_puzzle pieces.

Assumes pre-validated arguments and pieces_total < 2**48 (the dispatch layer
in cachepuzzle.puzzle guarantees both).
"""

from libc.stdlib cimport free, malloc
from libc.string cimport memcmp, memcpy, memset


cdef extern from "openssl/evp.h" nogil:
    ctypedef struct EVP_MD
    ctypedef struct EVP_MD_CTX
    ctypedef struct EVP_CIPHER
    ctypedef struct EVP_CIPHER_CTX
    ctypedef struct ENGINE

    const EVP_MD *EVP_sha256()
    EVP_MD_CTX *EVP_MD_CTX_new()
    void EVP_MD_CTX_free(EVP_MD_CTX *ctx)
    int EVP_DigestInit_ex(EVP_MD_CTX *ctx, const EVP_MD *type, ENGINE *impl)
    int EVP_DigestUpdate(EVP_MD_CTX *ctx, const void *d, size_t cnt)
    int EVP_DigestFinal_ex(EVP_MD_CTX *ctx, unsigned char *md, unsigned int *s)

    const EVP_CIPHER *EVP_aes_128_ctr()
    EVP_CIPHER_CTX *EVP_CIPHER_CTX_new()
    void EVP_CIPHER_CTX_free(EVP_CIPHER_CTX *ctx)
    int EVP_EncryptInit_ex(EVP_CIPHER_CTX *ctx, const EVP_CIPHER *cipher, ENGINE *impl,
                           const unsigned char *key, const unsigned char *iv)
    int EVP_EncryptUpdate(EVP_CIPHER_CTX *ctx, unsigned char *out, int *outl,
                          const unsigned char *inp, int inl)


cdef int HASH_SIZE = 32


cdef inline unsigned long long _mod_be32(const unsigned char *loc, unsigned long long m) nogil:
    # big-endian 256-bit value mod m; safe for m < 2**48
    cdef unsigned long long rem = 0
    cdef int i
    for i in range(32):
        rem = ((rem << 8) | loc[i]) % m
    return rem


cdef inline int _sha256_into(EVP_MD_CTX *ctx, const unsigned char *buf, size_t length,
                             unsigned char *out) nogil:
    cdef unsigned int olen = 0
    if EVP_DigestInit_ex(ctx, EVP_sha256(), NULL) != 1:
        return -1
    if EVP_DigestUpdate(ctx, buf, length) != 1:
        return -1
    if EVP_DigestFinal_ex(ctx, out, &olen) != 1:
        return -1
    return 0


cdef int _walk(const unsigned char **ptrs, Py_ssize_t n, Py_ssize_t piece_size,
               unsigned long long pieces_total, Py_ssize_t steps,
               unsigned long long start_index, EVP_MD_CTX *mctx,
               unsigned char *buf) nogil:
    # buf holds [location | piece]; the digest of the whole buffer becomes the
    # next location, written over the first 32 bytes.
    cdef Py_ssize_t i, j = 0
    cdef unsigned long long idx = start_index
    memset(buf, 0, HASH_SIZE)
    for i in range(steps):
        memcpy(buf + HASH_SIZE, ptrs[j] + idx * piece_size, piece_size)
        if _sha256_into(mctx, buf, HASH_SIZE + piece_size, buf) != 0:
            return -1
        idx = _mod_be32(buf, pieces_total)
        j += 1
        if j == n:
            j = 0
    return 0


cdef const unsigned char **_chunk_ptrs(list chunks) except NULL:
    cdef Py_ssize_t n = len(chunks)
    cdef const unsigned char **ptrs = <const unsigned char **>malloc(n * sizeof(void *))
    if ptrs == NULL:
        raise MemoryError()
    cdef Py_ssize_t j
    cdef bytes c
    for j in range(n):
        c = chunks[j]
        ptrs[j] = <const unsigned char *><char *>c
    return ptrs


def chain_location(list chunks, Py_ssize_t piece_size, unsigned long long pieces_total,
                   Py_ssize_t steps, unsigned long long start_index):
    """Walk the chain over already-encrypted chunks; return the final location."""
    cdef Py_ssize_t n = len(chunks)
    cdef const unsigned char **ptrs = _chunk_ptrs(chunks)
    cdef unsigned char *buf = <unsigned char *>malloc(HASH_SIZE + piece_size)
    cdef EVP_MD_CTX *mctx = EVP_MD_CTX_new()
    cdef int rc = -1
    try:
        if buf == NULL or mctx == NULL:
            raise MemoryError()
        with nogil:
            rc = _walk(ptrs, n, piece_size, pieces_total, steps, start_index, mctx, buf)
        if rc != 0:
            raise RuntimeError("SHA256 failure in libcrypto")
        return buf[:HASH_SIZE]
    finally:
        if mctx != NULL:
            EVP_MD_CTX_free(mctx)
        free(buf)
        free(ptrs)


def solve_scan(list chunks, Py_ssize_t piece_size, unsigned long long pieces_total,
               Py_ssize_t steps, bytes challenge, unsigned long long start_at=0):
    """Try candidate starting pieces in ascending order until one chains to
    ``challenge``. Returns (start_index, final_location) or None."""
    cdef Py_ssize_t n = len(chunks)
    cdef const unsigned char **ptrs = _chunk_ptrs(chunks)
    cdef unsigned char *buf = <unsigned char *>malloc(HASH_SIZE + piece_size)
    cdef unsigned char loc[32]
    cdef unsigned char digest[32]
    cdef unsigned char target[32]
    cdef EVP_MD_CTX *mctx = EVP_MD_CTX_new()
    cdef unsigned long long t
    cdef long long found = -1
    cdef int rc = 0
    if len(challenge) != HASH_SIZE:
        free(buf)
        free(ptrs)
        if mctx != NULL:
            EVP_MD_CTX_free(mctx)
        raise ValueError("challenge must be 32 bytes")
    memcpy(target, <const unsigned char *><char *>challenge, HASH_SIZE)
    try:
        if buf == NULL or mctx == NULL:
            raise MemoryError()
        with nogil:
            for t in range(start_at, pieces_total):
                if _walk(ptrs, n, piece_size, pieces_total, steps, t, mctx, buf) != 0:
                    rc = -1
                    break
                memcpy(loc, buf, HASH_SIZE)
                if _sha256_into(mctx, loc, HASH_SIZE, digest) != 0:
                    rc = -1
                    break
                if memcmp(digest, target, HASH_SIZE) == 0:
                    found = <long long>t
                    break
        if rc != 0:
            raise RuntimeError("SHA256 failure in libcrypto")
        if found < 0:
            return None
        return int(found), loc[:HASH_SIZE]
    finally:
        if mctx != NULL:
            EVP_MD_CTX_free(mctx)
        free(buf)
        free(ptrs)


def generate_chain(list chunks, list keys, list counters, Py_ssize_t piece_size,
                   unsigned long long pieces_total, Py_ssize_t steps,
                   unsigned long long start_index):
    """Walk the chain over raw chunks, encrypting each visited piece with
    AES-128-CTR before hashing. ``counters`` are 128-bit ints per chunk."""
    cdef Py_ssize_t n = len(chunks)
    cdef const unsigned char **ptrs = _chunk_ptrs(chunks)
    cdef unsigned char *buf = <unsigned char *>malloc(HASH_SIZE + piece_size)
    cdef unsigned long long *ctr_hi = <unsigned long long *>malloc(n * sizeof(unsigned long long))
    cdef unsigned long long *ctr_lo = <unsigned long long *>malloc(n * sizeof(unsigned long long))
    cdef EVP_CIPHER_CTX **cctx = <EVP_CIPHER_CTX **>malloc(n * sizeof(void *))
    cdef EVP_MD_CTX *mctx = EVP_MD_CTX_new()
    cdef unsigned char iv[16]
    cdef Py_ssize_t i, j
    cdef unsigned long long idx, delta, lo, hi, bpp
    cdef int outl = 0
    cdef int rc = 0
    cdef bytes key
    cdef object ictr
    if cctx != NULL:
        memset(cctx, 0, n * sizeof(void *))
    try:
        if (buf == NULL or ctr_hi == NULL or ctr_lo == NULL or cctx == NULL
                or mctx == NULL):
            raise MemoryError()
        memset(iv, 0, 16)
        for j in range(n):
            key = keys[j]
            if len(key) != 16:
                raise ValueError("session keys must be 16 bytes")
            ictr = counters[j]
            ctr_hi[j] = <unsigned long long>(ictr >> 64)
            ctr_lo[j] = <unsigned long long>(ictr & 0xFFFFFFFFFFFFFFFF)
            cctx[j] = EVP_CIPHER_CTX_new()
            if cctx[j] == NULL:
                raise MemoryError()
            if EVP_EncryptInit_ex(cctx[j], EVP_aes_128_ctr(), NULL,
                                  <const unsigned char *><char *>key, iv) != 1:
                raise RuntimeError("AES-CTR init failure in libcrypto")
        bpp = <unsigned long long>(piece_size // 16)
        with nogil:
            memset(buf, 0, HASH_SIZE)
            idx = start_index
            j = 0
            for i in range(steps):
                delta = idx * bpp
                lo = ctr_lo[j] + delta
                hi = ctr_hi[j] + (1 if lo < delta else 0)
                _store_be_iv(iv, hi, lo)
                if EVP_EncryptInit_ex(cctx[j], NULL, NULL, NULL, iv) != 1:
                    rc = -1
                    break
                if EVP_EncryptUpdate(cctx[j], buf + HASH_SIZE, &outl,
                                     ptrs[j] + idx * piece_size, <int>piece_size) != 1:
                    rc = -1
                    break
                if _sha256_into(mctx, buf, HASH_SIZE + piece_size, buf) != 0:
                    rc = -1
                    break
                idx = _mod_be32(buf, pieces_total)
                j += 1
                if j == n:
                    j = 0
        if rc != 0:
            raise RuntimeError("libcrypto failure during chain generation")
        return buf[:HASH_SIZE]
    finally:
        if cctx != NULL:
            for j in range(n):
                if cctx[j] != NULL:
                    EVP_CIPHER_CTX_free(cctx[j])
            free(cctx)
        if mctx != NULL:
            EVP_MD_CTX_free(mctx)
        free(ctr_lo)
        free(ctr_hi)
        free(buf)
        free(ptrs)


cdef inline void _store_be_iv(unsigned char *iv, unsigned long long hi,
                              unsigned long long lo) nogil:
    cdef int k
    for k in range(8):
        iv[7 - k] = <unsigned char>(hi >> (8 * k))
        iv[15 - k] = <unsigned char>(lo >> (8 * k))
