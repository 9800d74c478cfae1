use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

/// One end of an in-memory, ordered, reliable byte pipe.
#[derive(Debug)]
pub struct LoopbackStream {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    pending: VecDeque<u8>,
    timeout: Duration,
}

/// Two connected loopback ends; reads block for at most `timeout`.
pub fn loopback_pair(timeout: Duration) -> (LoopbackStream, LoopbackStream) {
    let (tx_ab, rx_ab) = channel();
    let (tx_ba, rx_ba) = channel();
    (
        LoopbackStream { tx: tx_ab, rx: rx_ba, pending: VecDeque::new(), timeout },
        LoopbackStream { tx: tx_ba, rx: rx_ab, pending: VecDeque::new(), timeout },
    )
}

impl Read for LoopbackStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        if self.pending.is_empty() {
            match self.rx.recv_timeout(self.timeout) {
                Ok(chunk) => self.pending.extend(chunk),
                Err(RecvTimeoutError::Timeout) => return Err(io::ErrorKind::TimedOut.into()),
                Err(RecvTimeoutError::Disconnected) => return Ok(0),
            }
        }
        let n = buf.len().min(self.pending.len());
        for (dst, src) in buf.iter_mut().zip(self.pending.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for LoopbackStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx.send(buf.to_vec()).map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_arrive_in_order() {
        let (mut a, mut b) = loopback_pair(Duration::from_millis(100));
        a.write_all(b"hel").unwrap();
        a.write_all(b"lo").unwrap();
        let mut buf = [0u8; 5];
        b.read_exact(&mut buf).unwrap();
        assert_eq!(&buf, b"hello");
    }

    #[test]
    fn silent_peer_times_out() {
        let (_a, mut b) = loopback_pair(Duration::from_millis(10));
        let mut buf = [0u8; 1];
        assert_eq!(b.read(&mut buf).unwrap_err().kind(), io::ErrorKind::TimedOut);
    }

    #[test]
    fn closed_peer_reads_eof() {
        let (a, mut b) = loopback_pair(Duration::from_millis(10));
        drop(a);
        assert_eq!(b.read(&mut [0u8; 1]).unwrap(), 0);
    }
}
